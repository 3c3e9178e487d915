// cofrgenet: continued-fraction generative network toolkit.
//
// Subcommands: train, eval, generate, gradcheck, identities, params, bench.
// Exit codes: 0 success, 1 check failure or runtime error, 2 usage/config
// error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "cfnet/bench.hpp"
#include "cfnet/generate.hpp"
#include "cfnet/param_count.hpp"
#include "cfnet/run_config.hpp"
#include "cfnet/verify.hpp"

namespace {

using namespace cfnet;

struct GlobalArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  std::string out_dir = "out";
};

Config load_config(const GlobalArgs& args) {
  Config cfg;
  if (!args.config_path.empty()) cfg.load_file(args.config_path);
  for (const auto& assignment : args.overrides) cfg.set(assignment);
  return cfg;
}

Corpus load_corpus_checked(const Config& cfg) {
  const std::string path = cfg.get_string("data.path");
  try {
    return load_corpus(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

// Rebuilds the configuration a checkpoint was trained with.
Config config_from_checkpoint(const std::string& path) {
  CheckpointMeta meta;
  try {
    meta = peek_checkpoint(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  Config cfg;
  for (const auto& [key, value] : meta.config) cfg.set(key, value);
  return cfg;
}

template <typename Scalar>
int run_train(const Config& cfg, const GlobalArgs& args) {
  std::filesystem::create_directories(args.out_dir);
  const Corpus corpus = load_corpus_checked(cfg);
  const TrainConfig tc = train_config_from(cfg, args.seed, args.out_dir);

  Trainer<Scalar> trainer(tc, corpus);
  const long long params = trainer.model().registry().total_size();
  ModelConfig baseline_cfg = tc.model;
  baseline_cfg.block.attention = AttentionVariant::Baseline;
  baseline_cfg.block.ffn = FfnVariant::Baseline;
  std::cout << "variant " << cfg.get_enum("model.variant") << "  parameters " << params
            << "  (baseline equivalent " << model_exact_count(baseline_cfg) << ")\n";
  std::cout << "corpus " << cfg.get_string("data.path") << "  train bytes "
            << corpus.train_size() << "  val bytes " << corpus.val_size()
            << "  unigram baseline " << unigram_entropy_nats(corpus) << " nats\n";

  const TrainResult result = trainer.run();
  std::cout << "final train_loss " << result.final_train_loss << "\n";
  std::cout << "final val_loss " << result.final_val_loss << "  val_ppl "
            << std::exp(result.final_val_loss) << "\n";
  std::cout << "metrics " << result.metrics_path << "\n";
  std::cout << "checkpoint " << result.checkpoint_path << "\n";
  return 0;
}

template <typename Scalar>
int run_eval(const Config& run_cfg, const std::string& checkpoint_path) {
  const Config cfg = config_from_checkpoint(checkpoint_path);
  Rng rng(0);
  CausalLM<Scalar> model(model_config_from(cfg), rng);
  load_checkpoint<Scalar>(checkpoint_path, model, nullptr, nullptr);
  model.set_tracker_mode(RangeTracker<Scalar>::Mode::Clipping);

  std::vector<std::uint8_t> text;
  const std::string text_path = run_cfg.get_string("eval.text");
  if (!text_path.empty()) {
    const Corpus c = load_corpus(text_path);
    text = c.tokens;
  } else {
    Config data_cfg = cfg;
    if (!run_cfg.is_default("data.path")) data_cfg.set("data.path", run_cfg.get_string("data.path"));
    const Corpus c = load_corpus_checked(data_cfg);
    text.assign(c.tokens.begin() + static_cast<std::ptrdiff_t>(c.train_end), c.tokens.end());
  }

  const Index stride = run_cfg.get_int("eval.stride");
  const double nll =
      perplexity_nll<Scalar>(model, {text.data(), text.size()}, stride, model.config().block.l_max);
  std::cout << "tokens " << text.size() << "  stride " << stride << "\n";
  std::cout << "nll " << nll << "  ppl " << std::exp(nll) << "\n";
  return 0;
}

template <typename Scalar>
int run_generate(const std::string& checkpoint_path, const std::string& prompt, Index n_tokens,
                 double temperature, std::uint64_t seed) {
  const Config cfg = config_from_checkpoint(checkpoint_path);
  Rng init_rng(0);
  CausalLM<Scalar> model(model_config_from(cfg), init_rng);
  load_checkpoint<Scalar>(checkpoint_path, model, nullptr, nullptr);
  model.set_tracker_mode(RangeTracker<Scalar>::Mode::Clipping);

  Rng rng(seed);
  const std::span<const std::uint8_t> prompt_span{
      reinterpret_cast<const std::uint8_t*>(prompt.data()), prompt.size()};
  const auto out = generate(model, prompt_span, n_tokens, temperature, rng);
  std::cout << std::string(out.begin(), out.end()) << "\n";
  return 0;
}

int print_report(const CheckReport& report) {
  std::printf("%-44s worst %.3e  bound %.1e  %s\n", report.name.c_str(), report.worst,
              report.bound, report.passed() ? "ok" : "FAIL");
  return report.passed() ? 0 : 1;
}

int run_gradcheck(const Config& cfg, std::uint64_t seed) {
  const long long draws = cfg.get_int("check.draws");
  const PoleGuard guard{cfg.get_real("model.epsilon")};
  int rc = 0;
  for (const int d : {1, 3, 5, 7}) {
    rc |= print_report(check_cf_gradients(d, draws, seed + static_cast<std::uint64_t>(d), guard));
  }
  rc |= print_report(check_ensemble_gradients(seed + 100));
  return rc;
}

int run_identities(const Config& cfg, std::uint64_t seed) {
  const long long draws = cfg.get_int("check.draws");
  const PoleGuard guard{cfg.get_real("model.epsilon")};
  int rc = 0;
  rc |= print_report(check_continuant_identities(8, draws, seed + 1));
  rc |= print_report(check_determinant_form(8, draws, seed + 2));
  for (const int d : {1, 4, 8}) {
    rc |= print_report(
        check_route_equivalence(d, draws, seed + 10 + static_cast<std::uint64_t>(d), guard));
  }
  return rc;
}

int run_params(const Config& cfg) {
  const ModelConfig mc = model_config_from(cfg);
  const BlockConfig& block = mc.block;

  std::printf("component shapes: p=%lld l=%lld heads=%lld L=%lld d=%lld alpha=%lld\n",
              static_cast<long long>(block.p), static_cast<long long>(block.l_max),
              static_cast<long long>(block.heads), static_cast<long long>(block.ladders),
              static_cast<long long>(block.depth), static_cast<long long>(block.alpha));
  std::printf("%-12s %12s %12s %8s\n", "component", "exact", "scale", "ratio");
  for (const auto kind : {ComponentKind::BaselineAttention, ComponentKind::CAttnU,
                          ComponentKind::CAttnM, ComponentKind::BaselineFfn, ComponentKind::Cffn}) {
    const long long exact = kind == ComponentKind::CAttnU ? exact_count_effective(kind, block)
                                                          : exact_count(kind, block);
    const long long scale = scale_count(kind, block);
    std::printf("%-12s %12lld %12lld %8.3f\n", component_name(kind), exact, scale,
                static_cast<double>(exact) / static_cast<double>(scale));
  }

  std::printf("%-12s %12s\n", "model", "exact");
  const std::pair<const char*, std::pair<AttentionVariant, FfnVariant>> variants[] = {
      {"baseline", {AttentionVariant::Baseline, FfnVariant::Baseline}},
      {"cofrgenet-f", {AttentionVariant::Baseline, FfnVariant::Cffn}},
      {"cofrgenet-a", {AttentionVariant::CAttnM, FfnVariant::Baseline}},
      {"cofrgenet", {AttentionVariant::CAttnM, FfnVariant::Cffn}},
  };
  for (const auto& [name, pair] : variants) {
    ModelConfig vc = mc;
    vc.block.attention = pair.first;
    vc.block.ffn = pair.second;
    std::printf("%-12s %12lld\n", name, model_exact_count(vc));
  }
  return 0;
}

int run_bench(const Config& cfg, std::uint64_t seed) {
  pin_to_single_cpu();
  const BenchReport report = run_cf_benchmark(
      cfg.get_int("bench.depth"), cfg.get_int("bench.batch"), cfg.get_int("bench.ladders"),
      static_cast<int>(cfg.get_int("bench.reps")), static_cast<int>(cfg.get_int("bench.warmup")),
      seed, PoleGuard{cfg.get_real("model.epsilon")});

  std::printf("depth %lld, %lld x %lld fractions, median of %d reps (forward+backward)\n",
              static_cast<long long>(report.depth), static_cast<long long>(report.rows),
              static_cast<long long>(report.ladders), report.reps);
  for (const BenchArm* arm : {&report.continuant, &report.literal}) {
    std::printf("%-12s %10.1f us   divisions: forward %lld, backward %lld\n", arm->name.c_str(),
                arm->median_us, arm->divisions_forward, arm->divisions_backward);
  }
  std::printf("speedup %.2fx, continuant %s, division counts %s\n", report.speedup,
              report.continuant_faster ? "faster" : "NOT faster",
              report.divisions_ok ? "exact" : "WRONG");
  return (report.divisions_ok && report.continuant_faster) ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"continued-fraction generative network toolkit"};
  app.require_subcommand(0, 1);

  GlobalArgs args;
  bool show_reference = false;
  app.add_option("--config", args.config_path, "configuration file (key = value lines)");
  app.add_option("--set", args.overrides, "override: key=value (repeatable)");
  app.add_option("--seed", args.seed, "random seed");
  app.add_option("--out", args.out_dir, "output directory");
  app.add_flag("--config-reference", show_reference, "print all configuration keys and exit");

  auto* train_cmd = app.add_subcommand("train", "train a model, write metrics and a checkpoint");
  auto* eval_cmd = app.add_subcommand("eval", "strided perplexity of a checkpoint");
  auto* generate_cmd = app.add_subcommand("generate", "sample bytes from a checkpoint");
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "analytic gradients vs finite differences");
  auto* identities_cmd =
      app.add_subcommand("identities", "continuant identity and determinant sweeps");
  auto* params_cmd = app.add_subcommand("params", "exact and scale parameter counts");
  auto* bench_cmd = app.add_subcommand("bench", "continuant vs literal evaluation benchmark");

  for (auto* sub : {train_cmd, eval_cmd, generate_cmd, gradcheck_cmd, identities_cmd,
                    params_cmd, bench_cmd}) {
    sub->fallthrough();
  }

  std::string checkpoint_path = "out/model.cfgn";
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint to evaluate");

  std::string gen_checkpoint = "out/model.cfgn";
  std::string prompt = "The ";
  long long n_tokens = 256;
  double temperature = 0.8;
  generate_cmd->add_option("--checkpoint", gen_checkpoint, "checkpoint to sample from");
  generate_cmd->add_option("--prompt", prompt, "prompt text");
  generate_cmd->add_option("--n-tokens", n_tokens, "tokens to sample");
  generate_cmd->add_option("--temperature", temperature, "sampling temperature (0 = greedy)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (show_reference) {
      std::cout << Config::reference();
      return 0;
    }
    const Config cfg = load_config(args);
    const bool f32 = cfg.get_enum("train.precision") == "f32";

    if (train_cmd->parsed()) {
      return f32 ? run_train<float>(cfg, args) : run_train<double>(cfg, args);
    }
    if (eval_cmd->parsed()) {
      const Config ckpt_cfg = config_from_checkpoint(checkpoint_path);
      return ckpt_cfg.get_enum("train.precision") == "f32"
                 ? run_eval<float>(cfg, checkpoint_path)
                 : run_eval<double>(cfg, checkpoint_path);
    }
    if (generate_cmd->parsed()) {
      const Config ckpt_cfg = config_from_checkpoint(gen_checkpoint);
      return ckpt_cfg.get_enum("train.precision") == "f32"
                 ? run_generate<float>(gen_checkpoint, prompt, n_tokens, temperature, args.seed)
                 : run_generate<double>(gen_checkpoint, prompt, n_tokens, temperature, args.seed);
    }
    if (gradcheck_cmd->parsed()) return run_gradcheck(cfg, args.seed);
    if (identities_cmd->parsed()) return run_identities(cfg, args.seed);
    if (params_cmd->parsed()) return run_params(cfg);
    if (bench_cmd->parsed()) return run_bench(cfg, args.seed);

    std::cout << app.help();
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
