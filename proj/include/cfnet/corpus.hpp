#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfnet/common.hpp"
#include "cfnet/rng.hpp"

namespace cfnet {

// Byte-level corpus with a deterministic 90/10 train/validation split by
// prefix: the first 90% of the file is training data, the tail is held out.
struct Corpus {
  std::vector<std::uint8_t> tokens;
  std::size_t train_end = 0;  // tokens[0, train_end) train, rest validation

  std::size_t train_size() const { return train_end; }
  std::size_t val_size() const { return tokens.size() - train_end; }
  static constexpr int vocab_size = 256;
};

Corpus load_corpus(const std::string& path);

// One next-token batch: inputs[i] predicts targets[i].
struct Batch {
  std::vector<int> inputs;   // batch * seq_len, row-major
  std::vector<int> targets;  // batch * seq_len
  Index batch = 0;
  Index seq_len = 0;
};

// Samples `batch` windows of length seq_len+1 uniformly from the training
// region. Requires train_size >= seq_len + 1.
Batch sample_batch(const Corpus& corpus, Index batch, Index seq_len, Rng& rng);

// Estimated byte entropy in nats of the validation split under the corpus'
// empirical unigram distribution (with add-one smoothing so unseen validation
// bytes score finitely). Used as a floor that a trained model must beat.
double unigram_entropy_nats(const Corpus& corpus);

}  // namespace cfnet
