#pragma once

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "cfnet/model.hpp"
#include "cfnet/optimizer.hpp"

// Checkpoint container: magic "CFGN", little-endian u32 format version,
// length-prefixed JSON header (config echo, iteration, RNG state, array
// index), then raw little-endian array payloads in index order. Floats are
// stored byte-exact, so a save/load round trip reproduces forward passes
// bit for bit. Loading stages everything before touching the destination:
// a truncated or mismatched file leaves no partial state behind.

namespace cfnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
constexpr const char* dtype_name();
template <>
constexpr const char* dtype_name<double>() { return "f64"; }
template <>
constexpr const char* dtype_name<float>() { return "f32"; }

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const std::string& buf, size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + i])) << (8 * i);
  }
  return v;
}

template <typename Scalar>
void append_scalar_bytes(std::string& out, const Tensor<Scalar>& t) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint payloads assume a little-endian host");
  const char* bytes = reinterpret_cast<const char*>(t.data());
  out.append(bytes, static_cast<size_t>(t.size()) * sizeof(Scalar));
}

}  // namespace detail

struct CheckpointMeta {
  long long iteration = 0;
  std::map<std::string, std::string> config;
  bool has_optimizer = false;
};

// Named views of every array a checkpoint carries for a model (+ optimizer).
template <typename Scalar>
std::vector<std::pair<std::string, Tensor<Scalar>*>> checkpoint_arrays(
    CausalLM<Scalar>& model, AdamOptimizer<Scalar>* opt) {
  std::vector<std::pair<std::string, Tensor<Scalar>*>> arrays;
  const auto& params = model.registry().all();
  for (const auto& p : params) arrays.emplace_back(p.name, p.tensor);
  if (opt) {
    for (size_t i = 0; i < params.size(); ++i) {
      arrays.emplace_back("adam.m:" + params[i].name, &opt->moment_m(i));
      arrays.emplace_back("adam.v:" + params[i].name, &opt->moment_v(i));
    }
  }
  return arrays;
}

template <typename Scalar>
void save_checkpoint(const std::string& path, CausalLM<Scalar>& model,
                     AdamOptimizer<Scalar>* opt, long long iteration, const Rng* rng,
                     const std::map<std::string, std::string>& config_echo) {
  nlohmann::json header;
  header["iteration"] = iteration;
  header["config"] = config_echo;
  if (rng) {
    std::vector<std::string> words;
    for (const std::uint64_t w : rng->state()) words.push_back(std::to_string(w));
    header["rng"] = words;
  }

  auto arrays = checkpoint_arrays(model, opt);

  // Tracker bounds ride along as arrays; observation counts go in the header.
  std::vector<std::pair<std::string, Tensor<Scalar>>> tracker_bounds;
  nlohmann::json trackers = nlohmann::json::array();
  model.visit_trackers([&](const std::string& name, RangeTracker<Scalar>& tr) {
    trackers.push_back({{"name", name}, {"observed", tr.observed_count()}});
    tracker_bounds.emplace_back("tracker:" + name + ":lo", tr.lo());
    tracker_bounds.emplace_back("tracker:" + name + ":hi", tr.hi());
  });
  header["trackers"] = trackers;
  for (auto& [name, tensor] : tracker_bounds) arrays.emplace_back(name, &tensor);

  if (opt) {
    std::vector<long long> steps;
    for (size_t i = 0; i < opt->slot_count(); ++i) steps.push_back(opt->step_count(i));
    header["adam_steps"] = steps;
  }

  nlohmann::json index = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, tensor] : arrays) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["dtype"] = dtype_name<Scalar>();
    entry["shape"] = tensor->shape();
    entry["offset"] = payload.size();
    entry["bytes"] = static_cast<size_t>(tensor->size()) * sizeof(Scalar);
    index.push_back(entry);
    detail::append_scalar_bytes(payload, *tensor);
  }
  header["arrays"] = index;

  const std::string header_text = header.dump();
  std::string out;
  out += "CFGN";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u64(out, header_text.size());
  out += header_text;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(detail::cat("cannot open checkpoint '", path, "' for writing"));
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw Error(detail::cat("failed writing checkpoint '", path, "'"));
}

namespace detail {

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(cat("cannot open checkpoint '", path, "'"));
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return buf;
}

inline nlohmann::json parse_checkpoint_header(const std::string& buf, const std::string& path,
                                              size_t* payload_start) {
  if (buf.size() < 16 || buf.compare(0, 4, "CFGN") != 0) {
    throw Error(cat("'", path, "' is not a checkpoint (bad magic)"));
  }
  const auto version = static_cast<std::uint32_t>(get_u64(buf, 4, 4));
  if (version != kCheckpointVersion) {
    throw Error(cat("checkpoint '", path, "' has format version ", version, ", expected ",
                    kCheckpointVersion));
  }
  const std::uint64_t header_len = get_u64(buf, 8, 8);
  if (16 + header_len > buf.size()) {
    throw Error(cat("checkpoint '", path, "' is truncated (header)"));
  }
  *payload_start = 16 + static_cast<size_t>(header_len);
  return nlohmann::json::parse(buf.substr(16, static_cast<size_t>(header_len)));
}

}  // namespace detail

// Reads iteration and config echo without touching any model.
inline CheckpointMeta peek_checkpoint(const std::string& path) {
  const std::string buf = detail::read_file_bytes(path);
  size_t payload_start = 0;
  const nlohmann::json header = detail::parse_checkpoint_header(buf, path, &payload_start);
  CheckpointMeta meta;
  meta.iteration = header.at("iteration").get<long long>();
  meta.config = header.at("config").get<std::map<std::string, std::string>>();
  meta.has_optimizer = header.contains("adam_steps");
  return meta;
}

template <typename Scalar>
CheckpointMeta load_checkpoint(const std::string& path, CausalLM<Scalar>& model,
                               AdamOptimizer<Scalar>* opt, Rng* rng) {
  const std::string buf = detail::read_file_bytes(path);
  size_t payload_start = 0;
  const nlohmann::json header = detail::parse_checkpoint_header(buf, path, &payload_start);

  CheckpointMeta meta;
  meta.iteration = header.at("iteration").get<long long>();
  meta.config = header.at("config").get<std::map<std::string, std::string>>();
  meta.has_optimizer = header.contains("adam_steps");

  // Stage 1: locate and validate every array this model expects.
  auto arrays = checkpoint_arrays(model, opt);
  std::vector<std::pair<std::string, Tensor<Scalar>>> tracker_staging;
  model.visit_trackers([&](const std::string& name, RangeTracker<Scalar>& tr) {
    tracker_staging.emplace_back("tracker:" + name + ":lo",
                                 Tensor<Scalar>::zeros(tr.lo().shape()));
    tracker_staging.emplace_back("tracker:" + name + ":hi",
                                 Tensor<Scalar>::zeros(tr.hi().shape()));
  });
  for (auto& [name, tensor] : tracker_staging) arrays.emplace_back(name, &tensor);

  std::map<std::string, nlohmann::json> index;
  for (const auto& entry : header.at("arrays")) {
    index[entry.at("name").get<std::string>()] = entry;
  }

  std::vector<Tensor<Scalar>> staged;
  staged.reserve(arrays.size());
  for (const auto& [name, tensor] : arrays) {
    const auto it = index.find(name);
    if (it == index.end()) {
      throw Error(detail::cat("checkpoint '", path, "' is missing array '", name, "'"));
    }
    const nlohmann::json& entry = it->second;
    if (entry.at("dtype").get<std::string>() != dtype_name<Scalar>()) {
      throw Error(detail::cat("checkpoint array '", name, "' has dtype ",
                              entry.at("dtype").get<std::string>(), ", expected ",
                              dtype_name<Scalar>()));
    }
    const auto shape = entry.at("shape").get<std::vector<Index>>();
    detail::require(shape == tensor->shape(),
                    detail::cat("checkpoint array '", name, "' has shape ",
                                detail::shape_str(shape), ", expected ",
                                detail::shape_str(tensor->shape())));
    const size_t offset = entry.at("offset").get<size_t>();
    const size_t bytes = entry.at("bytes").get<size_t>();
    if (payload_start + offset + bytes > buf.size()) {
      throw Error(detail::cat("checkpoint '", path, "' is truncated (array '", name, "')"));
    }
    detail::require(bytes == static_cast<size_t>(tensor->size()) * sizeof(Scalar),
                    detail::cat("checkpoint array '", name, "' has unexpected byte count"));
    Tensor<Scalar> t(tensor->shape());
    std::memcpy(t.data(), buf.data() + payload_start + offset, bytes);
    staged.push_back(std::move(t));
  }

  // Stage 2: validated; commit everything.
  for (size_t i = 0; i < arrays.size(); ++i) *arrays[i].second = staged[i];

  size_t tracker_i = arrays.size() - tracker_staging.size();
  size_t tracker_json_i = 0;
  const nlohmann::json& trackers = header.at("trackers");
  model.visit_trackers([&](const std::string& name, RangeTracker<Scalar>& tr) {
    const long long observed = trackers.at(tracker_json_i).at("observed").get<long long>();
    detail::require(trackers.at(tracker_json_i).at("name").get<std::string>() == name,
                    "checkpoint tracker order mismatch");
    tr.restore(staged[tracker_i], staged[tracker_i + 1], observed);
    tracker_i += 2;
    tracker_json_i += 1;
  });

  if (opt && meta.has_optimizer) {
    const auto steps = header.at("adam_steps").get<std::vector<long long>>();
    detail::require(steps.size() == opt->slot_count(), "checkpoint optimizer slot mismatch");
    for (size_t i = 0; i < steps.size(); ++i) opt->step_count(i) = steps[i];
  }
  if (rng && header.contains("rng")) {
    const auto words = header.at("rng").get<std::vector<std::string>>();
    detail::require(words.size() == 4, "checkpoint rng state must have 4 words");
    std::array<std::uint64_t, 4> state{};
    for (size_t i = 0; i < 4; ++i) state[i] = std::stoull(words[i]);
    rng->set_state(state);
  }
  return meta;
}

}  // namespace cfnet
