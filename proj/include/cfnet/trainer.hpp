#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "cfnet/checkpoint.hpp"
#include "cfnet/corpus.hpp"
#include "cfnet/perplexity.hpp"

namespace cfnet {

struct TrainConfig {
  ModelConfig model;
  long long iters = 2000;
  Index batch = 8;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.1;
  double clip_norm = 1.0;
  bool schedule = true;
  long long eval_every = 200;     // 0 = final evaluation only
  Index eval_stride = 32;
  long long checkpoint_every = 0; // 0 = final checkpoint only
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string resume;
  std::map<std::string, std::string> config_echo;  // stored in checkpoints

  void validate() const {
    model.validate();
    detail::require(iters >= 1 && batch >= 1, "train config: iters and batch must be >= 1");
    if (schedule) {
      const long long need = 1LL << (model.block.depth + 1);
      detail::require(iters >= need,
                      detail::cat("train config: with the dyadic schedule, iters must be >= 2^(d+1) = ",
                                  need, " so every depth unfreezes, got ", iters));
    }
    detail::require(eval_stride >= 1 && eval_stride <= model.block.l_max,
                    "train config: eval_stride must be in [1, l_max]");
  }
};

struct TrainResult {
  long long iterations = 0;
  double final_train_loss = 0.0;
  double final_val_loss = 0.0;
  std::string metrics_path;
  std::string checkpoint_path;
};

// Single-threaded training driver: owns the model, optimizer state, RNG, and
// the metrics stream. Batches, updates, and evaluation are fully determined
// by (seed, corpus, config).
template <typename Scalar>
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const Corpus& corpus)
      : cfg_(cfg), corpus_(&corpus), rng_(cfg.seed), model_(cfg.model, rng_) {
    cfg_.validate();
    OptimizerConfig oc;
    oc.lr = cfg.lr;
    oc.beta1 = cfg.beta1;
    oc.beta2 = cfg.beta2;
    oc.weight_decay = cfg.weight_decay;
    oc.clip_norm = cfg.clip_norm;
    oc.schedule = cfg.schedule;
    oc.total_iters = cfg.iters;
    optimizer_ = std::make_unique<AdamOptimizer<Scalar>>(model_.registry(), oc);

    if (!cfg.resume.empty()) {
      const CheckpointMeta meta = load_checkpoint(cfg.resume, model_, optimizer_.get(), &rng_);
      iteration_ = meta.iteration;
    }
  }

  CausalLM<Scalar>& model() { return model_; }
  AdamOptimizer<Scalar>& optimizer() { return *optimizer_; }
  long long iteration() const { return iteration_; }
  Rng& rng() { return rng_; }

  // One optimization step; returns the batch loss.
  double step() {
    const Batch batch = sample_batch(*corpus_, cfg_.batch, cfg_.model.block.l_max, rng_);

    model_.set_tracker_mode(RangeTracker<Scalar>::Mode::Recording);
    Tape<Scalar> tape;
    ParamBinder<Scalar> bind(tape, true);
    Var<Scalar> loss =
        model_.loss(bind, batch.inputs, batch.targets, batch.batch, batch.seq_len);
    const double loss_value = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(loss_value)) {
      throw Error(detail::cat("non-finite loss ", loss_value, " at iteration ", iteration_,
                              "\n", tracker_ranges_dump()));
    }
    tape.backward(loss);

    const auto& params = model_.registry().all();
    std::vector<Tensor<Scalar>> grads;
    grads.reserve(params.size());
    for (const auto& p : params) grads.push_back(tape.grad(bind.bound_var(*p.tensor)));
    optimizer_->step(model_.registry(), grads, iteration_);
    ++iteration_;
    return loss_value;
  }

  // Mean validation NLL with trackers clipping (inference conditions).
  double val_loss() {
    model_.set_tracker_mode(RangeTracker<Scalar>::Mode::Clipping);
    const std::span<const std::uint8_t> val{corpus_->tokens.data() + corpus_->train_end,
                                            corpus_->val_size()};
    const double nll =
        perplexity_nll<Scalar>(model_, val, cfg_.eval_stride, cfg_.model.block.l_max);
    model_.set_tracker_mode(RangeTracker<Scalar>::Mode::Recording);
    return nll;
  }

  TrainResult run(bool quiet = false) {
    const std::string metrics_path = cfg_.out_dir + "/metrics.csv";
    std::ofstream metrics(metrics_path, std::ios::trunc);
    detail::require(static_cast<bool>(metrics),
                    detail::cat("cannot open metrics file '", metrics_path, "'"));
    metrics << "iter,loss,lr,active_depths\n";

    TrainResult result;
    double last_loss = 0.0;
    while (iteration_ < cfg_.iters) {
      const long long iter = iteration_;
      last_loss = step();
      metrics << iter << ',' << format_value(last_loss) << ',' << format_value(cfg_.lr) << ','
              << active_depths_string(iter) << '\n';

      if (cfg_.eval_every > 0 && (iter + 1) % cfg_.eval_every == 0 && iteration_ < cfg_.iters) {
        const double vl = val_loss();
        if (!quiet) {
          std::cout << "iter " << (iter + 1) << "  train_loss " << last_loss << "  val_loss "
                    << vl << "\n";
        }
      }
      if (cfg_.checkpoint_every > 0 && (iter + 1) % cfg_.checkpoint_every == 0 &&
          iteration_ < cfg_.iters) {
        save_checkpoint(checkpoint_path(), model_, optimizer_.get(), iteration_, &rng_,
                        cfg_.config_echo);
      }
    }
    metrics.close();

    result.iterations = iteration_;
    result.final_train_loss = last_loss;
    result.final_val_loss = val_loss();
    result.metrics_path = metrics_path;
    result.checkpoint_path = checkpoint_path();
    save_checkpoint(result.checkpoint_path, model_, optimizer_.get(), iteration_, &rng_,
                    cfg_.config_echo);
    return result;
  }

  std::string checkpoint_path() const { return cfg_.out_dir + "/model.cfgn"; }

  std::string active_depths_string(long long iter) const {
    std::string out;
    for (const int k :
         optimizer_->active_depths(iter, static_cast<int>(cfg_.model.block.depth))) {
      if (!out.empty()) out += ';';
      out += std::to_string(k);
    }
    return out;
  }

  std::string tracker_ranges_dump() {
    std::string out = "ladder ranges at failure:";
    model_.visit_trackers([&](const std::string& name, RangeTracker<Scalar>& tr) {
      out += detail::cat("\n  ", name, ": observed ", tr.observed_count());
      if (tr.has_bounds()) {
        for (Index j = 0; j < tr.ladders(); ++j) {
          out += detail::cat(" [", tr.lo()[j], ", ", tr.hi()[j], "]");
        }
      }
    });
    return out;
  }

  // Round-trippable float text (shortest exact form).
  static std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
  }

 private:
  TrainConfig cfg_;
  const Corpus* corpus_;
  Rng rng_;
  CausalLM<Scalar> model_;
  std::unique_ptr<AdamOptimizer<Scalar>> optimizer_;
  long long iteration_ = 0;
};

}  // namespace cfnet
