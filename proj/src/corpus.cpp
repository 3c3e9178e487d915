#include "cfnet/corpus.hpp"

#include <array>
#include <cmath>
#include <fstream>

namespace cfnet {

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(detail::cat("cannot open corpus file '", path, "'"));
  Corpus corpus;
  in.seekg(0, std::ios::end);
  const std::streamoff size = in.tellg();
  in.seekg(0, std::ios::beg);
  if (size <= 0) throw Error(detail::cat("corpus file '", path, "' is empty"));
  corpus.tokens.resize(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(corpus.tokens.data()), size);
  if (!in) throw Error(detail::cat("failed reading corpus file '", path, "'"));
  corpus.train_end = corpus.tokens.size() * 9 / 10;
  if (corpus.train_end == 0) corpus.train_end = corpus.tokens.size();
  return corpus;
}

Batch sample_batch(const Corpus& corpus, Index batch, Index seq_len, Rng& rng) {
  detail::require(batch >= 1 && seq_len >= 1, "batch and seq_len must be >= 1");
  const std::size_t window = static_cast<std::size_t>(seq_len) + 1;
  detail::require(corpus.train_size() >= window,
                  detail::cat("training split has ", corpus.train_size(),
                              " bytes, need at least ", window));
  Batch out;
  out.batch = batch;
  out.seq_len = seq_len;
  out.inputs.resize(static_cast<std::size_t>(batch * seq_len));
  out.targets.resize(static_cast<std::size_t>(batch * seq_len));
  const std::uint64_t span = corpus.train_size() - window + 1;
  for (Index b = 0; b < batch; ++b) {
    const std::size_t start = static_cast<std::size_t>(rng.below(span));
    for (Index t = 0; t < seq_len; ++t) {
      out.inputs[static_cast<std::size_t>(b * seq_len + t)] = corpus.tokens[start + t];
      out.targets[static_cast<std::size_t>(b * seq_len + t)] = corpus.tokens[start + t + 1];
    }
  }
  return out;
}

double unigram_entropy_nats(const Corpus& corpus) {
  // Cross-entropy of the validation split under the add-one-smoothed unigram
  // distribution of the training split: the loss a unigram model achieves.
  std::array<double, 256> counts{};
  for (std::size_t i = 0; i < corpus.train_end; ++i) counts[corpus.tokens[i]] += 1.0;
  const double total = static_cast<double>(corpus.train_end) + 256.0;
  std::array<double, 256> logp{};
  for (int v = 0; v < 256; ++v) logp[v] = std::log((counts[v] + 1.0) / total);

  double nll = 0.0;
  std::size_t n = 0;
  for (std::size_t i = corpus.train_end; i < corpus.tokens.size(); ++i) {
    nll -= logp[corpus.tokens[i]];
    ++n;
  }
  if (n == 0) {  // no validation split; fall back to the training split
    for (std::size_t i = 0; i < corpus.train_end; ++i) nll -= logp[corpus.tokens[i]];
    n = corpus.train_end;
  }
  return nll / static_cast<double>(n);
}

}  // namespace cfnet
