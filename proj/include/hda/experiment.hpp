#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"

#include "hda/adaptation.hpp"
#include "hda/attack.hpp"
#include "hda/dataset.hpp"
#include "hda/divergence.hpp"
#include "hda/error.hpp"
#include "hda/random.hpp"
#include "hda/serialize.hpp"

namespace hda {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

enum class BenchmarkKind : std::uint8_t { two_moons, blobs, files };

inline std::string_view to_string(BenchmarkKind k) {
  switch (k) {
    case BenchmarkKind::two_moons: return "two_moons";
    case BenchmarkKind::blobs: return "blobs";
    case BenchmarkKind::files: return "files";
  }
  return "unknown";
}

/// Where a (source, target) pair comes from. Generated benchmarks draw the
/// target independently of the source and then apply `shift`.
struct BenchmarkSpec {
  std::string name = "two_moons_rot45";
  BenchmarkKind kind = BenchmarkKind::two_moons;
  std::size_t n_source = 1000;
  std::size_t n_target = 1000;
  double noise = 0.1;                          // two_moons
  std::vector<std::vector<double>> centers;    // blobs
  double sigma = 0.05;                         // blobs
  ShiftSpec shift;                             // generated kinds
  std::uint64_t data_seed = 0;                 // combined with the run seed
  std::string source_path;                     // files: internal dataset format
  std::string target_path;

  friend bool operator==(const BenchmarkSpec&, const BenchmarkSpec&) = default;
};

struct MethodSpec {
  std::string name;  // row label in reports; defaults to the method name
  DAConfig da;

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

struct ExperimentConfig {
  std::vector<BenchmarkSpec> benchmarks;
  HdhConfig hdh;
  AttackConfig attack;
  PretrainConfig pretrain;
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string output_dir = "runs";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

namespace detail {

// Reads optional fields of one JSON object, collecting every problem instead
// of stopping at the first.
class FieldReader {
 public:
  FieldReader(const json& obj, std::string prefix, std::vector<std::string>& errors)
      : obj_(obj), prefix_(std::move(prefix)), errors_(errors) {
    if (!obj_.is_object()) errors_.push_back(prefix_ + " must be an object");
  }

  template <typename T>
  bool read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return false;
    try {
      out = obj_.at(key).get<T>();
      return true;
    } catch (const json::exception&) {
      errors_.push_back(path(key) + " has the wrong type");
      return false;
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!obj_.is_object() || !obj_.contains(key)) return nullptr;
    return &obj_.at(key);
  }

  std::string path(const std::string& key) const { return prefix_ + "." + key; }

  void finish() {
    if (!obj_.is_object()) return;
    for (const auto& [key, _] : obj_.items()) {
      if (!seen_.contains(key)) errors_.push_back(path(key) + " is not a known field");
    }
  }

 private:
  const json& obj_;
  std::string prefix_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

inline void append(std::vector<std::string>& into, std::vector<std::string> more) {
  into.insert(into.end(), std::make_move_iterator(more.begin()), std::make_move_iterator(more.end()));
}

}  // namespace detail

inline json to_json(const ShiftSpec& s) {
  return {{"rotation", s.rotation},         {"translation", s.translation}, {"noise_sigma", s.noise_sigma},
          {"channel_bias", s.channel_bias}, {"seed", s.seed},               {"image_height", s.image_height},
          {"image_width", s.image_width}};
}

inline ShiftSpec parse_shift(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  ShiftSpec s;
  detail::FieldReader r(j, prefix, errors);
  r.read("rotation", s.rotation);
  r.read("translation", s.translation);
  r.read("noise_sigma", s.noise_sigma);
  r.read("channel_bias", s.channel_bias);
  r.read("seed", s.seed);
  r.read("image_height", s.image_height);
  r.read("image_width", s.image_width);
  r.finish();
  if (!(s.noise_sigma >= 0.0)) errors.push_back(prefix + ".noise_sigma must be >= 0");
  return s;
}

inline json to_json(const BenchmarkSpec& b) {
  json j = {{"name", b.name}, {"kind", std::string(to_string(b.kind))}, {"data_seed", b.data_seed}};
  if (b.kind == BenchmarkKind::files) {
    j["source_path"] = b.source_path;
    j["target_path"] = b.target_path;
    return j;
  }
  j["n_source"] = b.n_source;
  j["n_target"] = b.n_target;
  if (b.kind == BenchmarkKind::two_moons) j["noise"] = b.noise;
  if (b.kind == BenchmarkKind::blobs) {
    j["centers"] = b.centers;
    j["sigma"] = b.sigma;
  }
  j["shift"] = to_json(b.shift);
  return j;
}

inline BenchmarkSpec parse_benchmark(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  BenchmarkSpec b;
  detail::FieldReader r(j, prefix, errors);
  r.read("name", b.name);
  std::string kind = "two_moons";
  r.read("kind", kind);
  if (kind == "two_moons") {
    b.kind = BenchmarkKind::two_moons;
  } else if (kind == "blobs") {
    b.kind = BenchmarkKind::blobs;
  } else if (kind == "files") {
    b.kind = BenchmarkKind::files;
  } else {
    errors.push_back(prefix + ".kind must be two_moons, blobs or files");
  }
  r.read("n_source", b.n_source);
  r.read("n_target", b.n_target);
  r.read("noise", b.noise);
  r.read("centers", b.centers);
  r.read("sigma", b.sigma);
  r.read("data_seed", b.data_seed);
  r.read("source_path", b.source_path);
  r.read("target_path", b.target_path);
  if (const json* shift = r.child("shift")) b.shift = parse_shift(*shift, prefix + ".shift", errors);
  r.finish();

  if (b.name.empty()) errors.push_back(prefix + ".name must be non-empty");
  if (b.kind == BenchmarkKind::files) {
    if (b.source_path.empty()) errors.push_back(prefix + ".source_path is required for kind files");
    if (b.target_path.empty()) errors.push_back(prefix + ".target_path is required for kind files");
  } else {
    if (b.n_source < 10) errors.push_back(prefix + ".n_source must be >= 10");
    if (b.n_target < 10) errors.push_back(prefix + ".n_target must be >= 10");
  }
  if (b.kind == BenchmarkKind::two_moons && !(b.noise >= 0.0)) errors.push_back(prefix + ".noise must be >= 0");
  if (b.kind == BenchmarkKind::blobs) {
    if (b.centers.size() < 2) errors.push_back(prefix + ".centers needs at least 2 entries");
    if (!(b.sigma >= 0.0)) errors.push_back(prefix + ".sigma must be >= 0");
  }
  return b;
}

inline json to_json(const HdhConfig& c) {
  return {{"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"hidden", c.hidden},
          {"train_fraction", c.train_fraction}};
}

inline HdhConfig parse_hdh(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  HdhConfig c;
  detail::FieldReader r(j, prefix, errors);
  r.read("epochs", c.epochs);
  r.read("learning_rate", c.learning_rate);
  r.read("batch_size", c.batch_size);
  r.read("hidden", c.hidden);
  r.read("train_fraction", c.train_fraction);
  r.finish();
  detail::append(errors, violations(c, prefix));
  return c;
}

inline json to_json(const AttackConfig& c) {
  return {{"epsilon", c.epsilon},   {"steps", c.steps},       {"norm", "linf"},
          {"clip_min", c.clip_min}, {"clip_max", c.clip_max}, {"target_domain_label", c.target_domain_label}};
}

inline AttackConfig parse_attack(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  AttackConfig c;
  detail::FieldReader r(j, prefix, errors);
  r.read("epsilon", c.epsilon);
  r.read("steps", c.steps);
  std::string norm = "linf";
  r.read("norm", norm);
  if (norm != "linf") errors.push_back(prefix + ".norm must be linf");
  r.read("clip_min", c.clip_min);
  r.read("clip_max", c.clip_max);
  r.read("target_domain_label", c.target_domain_label);
  r.finish();
  detail::append(errors, violations(c, prefix, true));
  return c;
}

inline json to_json(const PretrainConfig& c) {
  return {{"epochs", c.epochs}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}};
}

inline PretrainConfig parse_pretrain(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  PretrainConfig c;
  detail::FieldReader r(j, prefix, errors);
  r.read("epochs", c.epochs);
  r.read("learning_rate", c.learning_rate);
  r.read("batch_size", c.batch_size);
  r.finish();
  detail::append(errors, violations(c, prefix));
  return c;
}

inline json to_json(const MethodSpec& m) {
  return {{"name", m.name},
          {"method", std::string(to_string(m.da.method))},
          {"epochs", m.da.epochs},
          {"learning_rate", m.da.learning_rate},
          {"lambda_domain", m.da.lambda_domain},
          {"mmd_weight", m.da.mmd_weight},
          {"mmd_bandwidths", m.da.mmd_bandwidths},
          {"bandwidth_scales", m.da.bandwidth_scales},
          {"batch_size", m.da.batch_size}};
}

inline MethodSpec parse_method(const json& j, const std::string& prefix, std::vector<std::string>& errors) {
  MethodSpec m;
  detail::FieldReader r(j, prefix, errors);
  std::string method;
  if (!r.read("method", method)) {
    errors.push_back(prefix + ".method is required");
  } else {
    try {
      m.da.method = da_method_from_string(method);
    } catch (const ConfigError&) {
      errors.push_back(prefix + ".method must be source_only, dann or mmd");
    }
  }
  m.name = std::string(to_string(m.da.method));
  r.read("name", m.name);
  r.read("epochs", m.da.epochs);
  r.read("learning_rate", m.da.learning_rate);
  r.read("lambda_domain", m.da.lambda_domain);
  r.read("mmd_weight", m.da.mmd_weight);
  r.read("mmd_bandwidths", m.da.mmd_bandwidths);
  r.read("bandwidth_scales", m.da.bandwidth_scales);
  r.read("batch_size", m.da.batch_size);
  r.finish();
  if (m.name.empty()) errors.push_back(prefix + ".name must be non-empty");
  detail::append(errors, violations(m.da, prefix));
  return m;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["benchmarks"] = json::array();
  for (const auto& b : c.benchmarks) j["benchmarks"].push_back(to_json(b));
  j["hdh"] = to_json(c.hdh);
  j["attack"] = to_json(c.attack);
  j["pretrain"] = to_json(c.pretrain);
  j["methods"] = json::array();
  for (const auto& m : c.methods) j["methods"].push_back(to_json(m));
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  return j;
}

/// Parses and validates; throws ValidationError listing every violated field.
/// Seeds inside the nested configs are not part of the schema: the runner
/// derives them from each run seed.
inline ExperimentConfig parse_experiment_config(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  detail::FieldReader r(j, "config", errors);
  if (const json* b = r.child("benchmarks")) {
    if (!b->is_array()) {
      errors.push_back("config.benchmarks must be an array");
    } else {
      for (std::size_t i = 0; i < b->size(); ++i) {
        c.benchmarks.push_back(parse_benchmark((*b)[i], "config.benchmarks[" + std::to_string(i) + "]", errors));
      }
    }
  }
  if (const json* h = r.child("hdh")) c.hdh = parse_hdh(*h, "config.hdh", errors);
  if (const json* a = r.child("attack")) c.attack = parse_attack(*a, "config.attack", errors);
  if (const json* p = r.child("pretrain")) c.pretrain = parse_pretrain(*p, "config.pretrain", errors);
  if (const json* m = r.child("methods")) {
    if (!m->is_array()) {
      errors.push_back("config.methods must be an array");
    } else {
      for (std::size_t i = 0; i < m->size(); ++i) {
        c.methods.push_back(parse_method((*m)[i], "config.methods[" + std::to_string(i) + "]", errors));
      }
    }
  }
  r.read("seeds", c.seeds);
  r.read("output_dir", c.output_dir);
  r.finish();

  if (c.benchmarks.empty()) errors.push_back("config.benchmarks needs at least one benchmark");
  if (c.methods.empty()) errors.push_back("config.methods needs at least one method");
  if (c.seeds.empty()) errors.push_back("config.seeds needs at least one seed");
  if (c.output_dir.empty()) errors.push_back("config.output_dir must be non-empty");
  std::set<std::string> names;
  for (const auto& b : c.benchmarks) {
    if (!names.insert(b.name).second) errors.push_back("config.benchmarks: duplicate name '" + b.name + "'");
  }
  names.clear();
  for (const auto& m : c.methods) {
    if (!names.insert(m.name).second) errors.push_back("config.methods: duplicate name '" + m.name + "'");
  }
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    errors.push_back("config.seeds contains duplicates");
  }
  if (!errors.empty()) throw ValidationError(std::move(errors));
  return c;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError({std::string("config is not valid JSON: ") + e.what()});
  }
  return parse_experiment_config(j);
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// ---------------------------------------------------------------------------
// Benchmarks and seeds

/// Seed streams used by the runner for one run seed.
struct RunSeeds {
  std::uint64_t data, hdh, pretrain, da;
};

inline RunSeeds run_seeds(std::uint64_t seed) {
  return {derive_seed(seed, 1000), derive_seed(seed, 1001), derive_seed(seed, 1002), derive_seed(seed, 1003)};
}

/// Materializes (source, target) for one run seed.
inline std::pair<LabeledDataset, LabeledDataset> make_benchmark(const BenchmarkSpec& b, std::uint64_t run_seed) {
  if (b.kind == BenchmarkKind::files) {
    auto s = load_dataset(b.source_path);
    auto t = load_dataset(b.target_path);
    s.domain = DomainTag::source;
    t.domain = DomainTag::target;
    return {std::move(s), std::move(t)};
  }
  const std::uint64_t base = derive_seed(b.data_seed, run_seeds(run_seed).data);
  auto gen = [&](std::size_t n, std::uint64_t stream) {
    return b.kind == BenchmarkKind::two_moons ? gen_two_moons(n, b.noise, derive_seed(base, stream))
                                              : gen_gaussian_blobs(n, b.centers, b.sigma, derive_seed(base, stream));
  };
  LabeledDataset s = gen(b.n_source, 0);
  ShiftSpec shift = b.shift;
  shift.seed = derive_seed(base ^ shift.seed, 2);
  LabeledDataset t = apply_shift(gen(b.n_target, 1), shift);
  return {std::move(s), std::move(t)};
}

// ---------------------------------------------------------------------------
// Records and reports

enum class Variant : std::uint8_t { baseline, hda };

inline std::string_view to_string(Variant v) { return v == Variant::baseline ? "baseline" : "hda"; }

inline Variant variant_from_string(std::string_view s) {
  if (s == "baseline") return Variant::baseline;
  if (s == "hda") return Variant::hda;
  throw FormatError("unknown variant '" + std::string(s) + "'");
}

/// (benchmark, method, variant, seed).
using RunKey = std::tuple<std::string, std::string, Variant, std::uint64_t>;

/// One line of runs.jsonl. Deterministic given the config; wall time lives
/// in timings.jsonl so reruns reproduce this record byte for byte.
struct RunRecord {
  std::string benchmark;
  std::string method;
  Variant variant = Variant::baseline;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport pretrained;
  EvalReport adapted;
  DivergenceReport divergence;
  double attack_success_before = 0.0;
  double attack_success_after = 0.0;

  RunKey key() const { return {benchmark, method, variant, seed}; }

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline json to_json(const Accuracy& a) {
  return {{"accuracy", a.accuracy}, {"correct", a.correct}, {"total", a.total}};
}

inline Accuracy accuracy_from_json(const json& j) {
  return {j.at("accuracy").get<double>(), j.at("correct").get<std::vector<std::size_t>>(),
          j.at("total").get<std::vector<std::size_t>>()};
}

inline json to_json(const EvalReport& e) { return {{"source", to_json(e.source)}, {"target", to_json(e.target)}}; }

inline EvalReport eval_from_json(const json& j) {
  return {accuracy_from_json(j.at("source")), accuracy_from_json(j.at("target"))};
}

inline json to_json(const DivergenceReport& d) {
  return {{"domain_error", d.domain_error},
          {"proxy_a_distance", d.proxy_a_distance},
          {"n_source", d.n_source},
          {"n_target", d.n_target}};
}

inline DivergenceReport divergence_from_json(const json& j) {
  return {j.at("domain_error").get<double>(), j.at("proxy_a_distance").get<double>(),
          j.at("n_source").get<std::size_t>(), j.at("n_target").get<std::size_t>()};
}

inline json to_json(const RunRecord& r) {
  json j = {{"benchmark", r.benchmark},
            {"method", r.method},
            {"variant", std::string(to_string(r.variant))},
            {"seed", r.seed},
            {"status", r.ok ? "ok" : "failed"}};
  if (!r.ok) {
    j["error"] = r.error;
    return j;
  }
  j["accuracy_source"] = r.adapted.accuracy_source();
  j["accuracy_target"] = r.adapted.accuracy_target();
  j["pretrained"] = to_json(r.pretrained);
  j["adapted"] = to_json(r.adapted);
  j["divergence"] = to_json(r.divergence);
  j["attack_success_before"] = r.attack_success_before;
  j["attack_success_after"] = r.attack_success_after;
  return j;
}

inline RunRecord record_from_json(const json& j) {
  try {
    RunRecord r;
    r.benchmark = j.at("benchmark").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.variant = variant_from_string(j.at("variant").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ok = j.at("status").get<std::string>() == "ok";
    if (!r.ok) {
      r.error = j.value("error", std::string());
      return r;
    }
    r.pretrained = eval_from_json(j.at("pretrained"));
    r.adapted = eval_from_json(j.at("adapted"));
    r.divergence = divergence_from_json(j.at("divergence"));
    r.attack_success_before = j.at("attack_success_before").get<double>();
    r.attack_success_after = j.at("attack_success_after").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed run record: ") + e.what());
  }
}

struct Aggregate {
  std::string benchmark;
  std::string method;
  Variant variant = Variant::baseline;
  std::size_t n = 0;
  double mean = 0.0;  // target accuracy, fraction
  double std = 0.0;   // population standard deviation

  friend bool operator==(const Aggregate&, const Aggregate&) = default;
};

struct RunReport {
  std::vector<RunRecord> records;  // sorted by key, one per key
  std::vector<Aggregate> aggregates;
  std::map<RunKey, double> wall_time_s;

  std::size_t failed() const {
    return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const auto& r) { return !r.ok; }));
  }
};

/// Population mean and standard deviation.
inline std::pair<double, double> mean_std(std::span<const double> v) {
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

/// Aggregates target accuracy of successful records per (benchmark, method, variant).
inline std::vector<Aggregate> aggregate(const std::vector<RunRecord>& records) {
  std::map<std::tuple<std::string, std::string, Variant>, std::vector<double>> groups;
  for (const auto& r : records) {
    if (r.ok) groups[{r.benchmark, r.method, r.variant}].push_back(r.adapted.accuracy_target());
  }
  std::vector<Aggregate> out;
  for (const auto& [k, values] : groups) {
    const auto [mean, sd] = mean_std(values);
    out.push_back({std::get<0>(k), std::get<1>(k), std::get<2>(k), values.size(), mean, sd});
  }
  return out;
}

/// Keeps the last record per key, preferring successful ones, sorted by key.
inline RunReport make_report(std::vector<RunRecord> records, std::map<RunKey, double> times = {}) {
  std::map<RunKey, RunRecord> latest;
  for (auto& r : records) {
    auto it = latest.find(r.key());
    if (it == latest.end() || r.ok || !it->second.ok) latest.insert_or_assign(r.key(), std::move(r));
  }
  RunReport rep;
  for (auto& [k, r] : latest) rep.records.push_back(std::move(r));
  rep.aggregates = aggregate(rep.records);
  rep.wall_time_s = std::move(times);
  return rep;
}

inline constexpr const char* kRecordsFile = "runs.jsonl";
inline constexpr const char* kTimingsFile = "timings.jsonl";
inline constexpr const char* kConfigFile = "config.json";

/// Reads runs.jsonl (and timings.jsonl if present). Lines that do not parse,
/// such as one cut short by a crash, are skipped.
inline RunReport load_run_report(const std::filesystem::path& dir) {
  std::vector<RunRecord> records;
  std::ifstream in(dir / kRecordsFile);
  if (!in) throw Error("no run records in '" + dir.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const std::exception&) {
      continue;
    }
  }
  std::map<RunKey, double> times;
  std::ifstream tin(dir / kTimingsFile);
  while (tin && std::getline(tin, line)) {
    try {
      const auto j = json::parse(line);
      times[{j.at("benchmark").get<std::string>(), j.at("method").get<std::string>(),
             variant_from_string(j.at("variant").get<std::string>()), j.at("seed").get<std::uint64_t>()}] =
          j.at("wall_time_s").get<double>();
    } catch (const std::exception&) {
      continue;
    }
  }
  return make_report(std::move(records), std::move(times));
}

// ---------------------------------------------------------------------------
// Tables

enum class TableFormat : std::uint8_t { csv, markdown };

inline std::string display_name(const std::string& method) {
  if (method == "source_only") return "Source only";
  if (method == "dann") return "DANN";
  if (method == "mmd") return "MMD";
  return method;
}

inline std::string format_cell(double mean, double sd) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f +- %.1f", 100.0 * mean, 100.0 * sd);
  return buf;
}

/// Rows are methods then method + HDA; columns are benchmarks; the best mean
/// per column is marked.
inline std::string emit_table(const RunReport& report, TableFormat format) {
  std::vector<std::string> benchmarks, methods;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& a : report.aggregates) {
    add_unique(benchmarks, a.benchmark);
    add_unique(methods, a.method);
  }
  std::sort(benchmarks.begin(), benchmarks.end());
  auto rank = [](const std::string& m) {
    if (m == "source_only") return 0;
    if (m == "dann") return 1;
    if (m == "mmd") return 2;
    return 3;
  };
  std::sort(methods.begin(), methods.end(), [&](const auto& a, const auto& b) {
    return std::make_pair(rank(a), a) < std::make_pair(rank(b), b);
  });

  auto find = [&](const std::string& b, const std::string& m, Variant v) -> const Aggregate* {
    for (const auto& a : report.aggregates) {
      if (a.benchmark == b && a.method == m && a.variant == v) return &a;
    }
    return nullptr;
  };
  std::map<std::string, double> best;
  for (const auto& a : report.aggregates) {
    auto it = best.find(a.benchmark);
    if (it == best.end() || a.mean > it->second) best[a.benchmark] = a.mean;
  }

  std::ostringstream out;
  if (format == TableFormat::csv) {
    out << "method,variant,benchmark,n,mean_target_accuracy_pct,std_target_accuracy_pct,cell,best\n";
    for (Variant v : {Variant::baseline, Variant::hda}) {
      for (const auto& m : methods) {
        for (const auto& b : benchmarks) {
          const Aggregate* a = find(b, m, v);
          if (a == nullptr) continue;
          char nums[96];
          std::snprintf(nums, sizeof nums, "%.6f,%.6f", 100.0 * a->mean, 100.0 * a->std);
          out << m << ',' << to_string(v) << ',' << b << ',' << a->n << ',' << nums << ','
              << format_cell(a->mean, a->std) << ',' << (a->mean == best[b] ? 1 : 0) << '\n';
        }
      }
    }
    return out.str();
  }

  out << "| Model |";
  for (const auto& b : benchmarks) out << ' ' << b << " |";
  out << "\n|---|";
  for (std::size_t i = 0; i < benchmarks.size(); ++i) out << "---|";
  out << '\n';
  for (Variant v : {Variant::baseline, Variant::hda}) {
    for (const auto& m : methods) {
      out << "| " << display_name(m) << (v == Variant::hda ? " + HDA" : "") << " |";
      for (const auto& b : benchmarks) {
        const Aggregate* a = find(b, m, v);
        if (a == nullptr) {
          out << " n/a |";
          continue;
        }
        const std::string cell = format_cell(a->mean, a->std);
        out << ' ' << (a->mean == best[b] ? "**" + cell + "**" : cell) << " |";
      }
      out << '\n';
    }
  }
  out << "\nCells: target accuracy (%) as mean +- population standard deviation (divide by n) over seeds; "
         "bold marks the best mean per column.\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Runner

struct RunOptions {
  std::size_t jobs = 1;
  bool resume = false;
};

namespace detail {

class RecordSink {
 public:
  RecordSink(const std::filesystem::path& dir, bool append) {
    const auto mode = append ? std::ios::app : std::ios::trunc;
    if (append) terminate_partial_line(dir / kRecordsFile);
    records_.open(dir / kRecordsFile, std::ios::out | mode);
    timings_.open(dir / kTimingsFile, std::ios::out | mode);
    if (!records_ || !timings_) throw Error("cannot open run files in '" + dir.string() + "'");
  }

  void write(const RunRecord& r, double seconds) {
    std::lock_guard lock(mu_);
    records_ << to_json(r).dump() << '\n';
    records_.flush();
    json t = {{"benchmark", r.benchmark},
              {"method", r.method},
              {"variant", std::string(to_string(r.variant))},
              {"seed", r.seed},
              {"wall_time_s", seconds}};
    timings_ << t.dump() << '\n';
    timings_.flush();
  }

 private:
  static void terminate_partial_line(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    if (!in || in.tellg() <= 0) return;
    in.seekg(-1, std::ios::end);
    char last = 0;
    in.get(last);
    if (last != '\n') std::ofstream(p, std::ios::app) << '\n';
  }

  std::mutex mu_;
  std::ofstream records_;
  std::ofstream timings_;
};

inline RunRecord failed_record(const std::string& bench, const std::string& method, Variant v, std::uint64_t seed,
                               const std::string& why) {
  RunRecord r;
  r.benchmark = bench;
  r.method = method;
  r.variant = v;
  r.seed = seed;
  r.ok = false;
  r.error = why;
  return r;
}

inline void run_unit(const ExperimentConfig& cfg, const BenchmarkSpec& bench, std::uint64_t seed,
                     const std::set<RunKey>& done, RecordSink& sink) {
  std::vector<std::pair<const MethodSpec*, Variant>> todo;
  for (const auto& m : cfg.methods) {
    for (Variant v : {Variant::baseline, Variant::hda}) {
      if (!done.contains(RunKey{bench.name, m.name, v, seed})) todo.emplace_back(&m, v);
    }
  }
  if (todo.empty()) return;

  const auto started = std::chrono::steady_clock::now();
  auto elapsed = [](auto since) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
  };
  const RunSeeds seeds = run_seeds(seed);

  std::optional<std::pair<LabeledDataset, LabeledDataset>> data;
  std::optional<AdversarialDomain> adv;
  try {
    data = make_benchmark(bench, seed);
    HdhConfig hdh = cfg.hdh;
    hdh.seed = seeds.hdh;
    adv = build_adversarial_domain(data->first, data->second, hdh, cfg.attack);
  } catch (const std::exception& e) {
    for (const auto& [m, v] : todo) sink.write(failed_record(bench.name, m->name, v, seed, e.what()), elapsed(started));
    return;
  }
  const double setup_time = elapsed(started);

  PretrainConfig pre = cfg.pretrain;
  pre.seed = seeds.pretrain;
  const std::uint64_t init_seed = derive_seed(pre.seed, 99);
  for (const auto& [m, v] : todo) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      DAConfig da = m->da;
      da.seed = seeds.da;
      const bool hda = v == Variant::hda;
      const auto result = run_variant(hda ? adv->data : data->first, data->first, data->second,
                                      hda ? adv->adversarial_vs_target : adv->source_vs_target, pre, da, init_seed);
      RunRecord r;
      r.benchmark = bench.name;
      r.method = m->name;
      r.variant = v;
      r.seed = seed;
      r.ok = true;
      r.pretrained = result.after_pretrain;
      r.adapted = result.after_adapt;
      r.divergence = result.divergence;
      r.attack_success_before = adv->success_before;
      r.attack_success_after = adv->success_after;
      sink.write(r, setup_time + elapsed(t0));
    } catch (const std::exception& e) {
      sink.write(failed_record(bench.name, m->name, v, seed, e.what()), setup_time + elapsed(t0));
    }
  }
}

}  // namespace detail

/// Runs every (benchmark, method, variant, seed) of the config, appending one
/// record per run to <output_dir>/runs.jsonl as it completes. With `resume`,
/// runs already recorded as successful are skipped. Failures are recorded and
/// do not stop the sweep.
inline RunReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
  namespace fs = std::filesystem;
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);

  std::set<RunKey> done;
  if (opts.resume && fs::exists(dir / kRecordsFile)) {
    for (const auto& r : load_run_report(dir).records) {
      if (r.ok) done.insert(r.key());
    }
  }
  {
    std::ofstream(dir / kConfigFile) << to_json(cfg).dump(2) << '\n';
  }
  detail::RecordSink sink(dir, opts.resume);

  std::vector<std::pair<const BenchmarkSpec*, std::uint64_t>> units;
  for (const auto& b : cfg.benchmarks) {
    for (std::uint64_t s : cfg.seeds) units.emplace_back(&b, s);
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < units.size(); i = next++) {
      detail::run_unit(cfg, *units[i].first, units[i].second, done, sink);
    }
  };
  const std::size_t jobs = std::clamp<std::size_t>(opts.jobs, 1, std::max<std::size_t>(1, units.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return load_run_report(dir);
}

}  // namespace hda
