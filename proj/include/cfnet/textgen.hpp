#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfnet/rng.hpp"

namespace cfnet {

// Deterministic English-like filler text: Zipf-weighted common words
// assembled into sentences and paragraphs. Entirely synthetic (no sourced
// text), so the output carries no license, while still having the byte-level
// regularities (word spellings, spacing, punctuation, casing) a character
// model can learn.
inline std::string synthetic_text(std::size_t target_bytes, std::uint64_t seed) {
  static const std::vector<std::string> words = {
      "the", "of", "and", "to", "in", "a", "is", "that", "was", "he",
      "for", "it", "with", "as", "his", "on", "be", "at", "by", "had",
      "not", "are", "but", "from", "or", "have", "an", "they", "which", "one",
      "you", "were", "her", "all", "she", "there", "would", "their", "we", "him",
      "been", "has", "when", "who", "will", "more", "no", "if", "out", "so",
      "said", "what", "up", "its", "about", "into", "than", "them", "can", "only",
      "other", "new", "some", "could", "time", "these", "two", "may", "then", "do",
      "first", "any", "my", "now", "such", "like", "our", "over", "man", "me",
      "even", "most", "made", "after", "also", "did", "many", "before", "must", "through",
      "years", "where", "much", "your", "way", "well", "down", "should", "because", "each",
      "just", "those", "people", "how", "too", "little", "state", "good", "very", "make",
      "world", "still", "own", "see", "men", "work", "long", "get", "here", "between",
      "both", "life", "being", "under", "never", "day", "same", "another", "know", "while",
      "last", "might", "great", "old", "year", "off", "come", "since", "against", "go",
      "came", "right", "used", "take", "three", "water", "house", "light", "again", "small",
      "place", "found", "every", "thought", "hand", "high", "night", "left", "part", "once",
  };

  Rng rng(seed);
  std::string out;
  out.reserve(target_bytes + 128);

  auto draw_word = [&]() -> const std::string& {
    // Zipf-like: rank r drawn with weight ~ 1/(r+3).
    const double u = rng.uniform();
    const std::size_t n = words.size();
    double total = 0.0;
    for (std::size_t r = 0; r < n; ++r) total += 1.0 / static_cast<double>(r + 3);
    double acc = 0.0;
    const double target = u * total;
    for (std::size_t r = 0; r < n; ++r) {
      acc += 1.0 / static_cast<double>(r + 3);
      if (acc >= target) return words[r];
    }
    return words[n - 1];
  };

  int sentences_in_paragraph = 0;
  while (out.size() < target_bytes) {
    const int sentence_words = 4 + static_cast<int>(rng.below(9));
    const int comma_at =
        sentence_words >= 7 ? 3 + static_cast<int>(rng.below(3)) : -1;
    for (int w = 0; w < sentence_words; ++w) {
      std::string word = draw_word();
      if (w == 0) word[0] = static_cast<char>(word[0] - 'a' + 'A');
      out += word;
      if (w == comma_at) out += ',';
      out += (w + 1 == sentence_words) ? "" : " ";
    }
    out += rng.below(12) == 0 ? "?" : ".";
    ++sentences_in_paragraph;
    if (sentences_in_paragraph >= 4 + static_cast<int>(rng.below(4))) {
      out += "\n\n";
      sentences_in_paragraph = 0;
    } else {
      out += " ";
    }
  }
  out.resize(target_bytes);
  return out;
}

}  // namespace cfnet
