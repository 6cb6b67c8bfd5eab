// SPDX-License-Identifier: Apache-2.0
#include "deqflow/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "deqflow/error.hpp"

namespace deqflow {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Format: return "format";
    case ErrorKind::Unsupported: return "unsupported";
    case ErrorKind::Size: return "size";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Domain: return "domain";
    case ErrorKind::Numeric: return "numeric";
    case ErrorKind::State: return "state";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Input: return "input";
    case ErrorKind::IO: return "io";
    case ErrorKind::Load: return "load";
    case ErrorKind::Usage: return "usage";
  }
  return "unknown";
}

namespace {

struct Ctx {
  ExperimentConfig& cfg;
  std::filesystem::path base;
};

struct Key {
  const char* section;
  const char* name;
  std::function<void(Ctx&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  std::istringstream in(s);
  T v{};
  in >> v;
  if (in.fail() || !in.eof()) fail(ErrorKind::Parameter, key + ": cannot parse '" + s + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  fail(ErrorKind::Parameter, key + ": expected true or false, got '" + s + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::filesystem::path resolve(const Ctx& c, const std::string& s) {
  if (s.empty()) return {};
  std::filesystem::path p(s);
  return p.is_absolute() || c.base.empty() ? p : c.base / p;
}

// Accessors take the config and hand back a reference to one field.
template <typename T, typename F>
Key num(const char* section, const char* name, F field) {
  return {section, name,
          [=](Ctx& c, const std::string& v) {
            field(c.cfg) = parse_number<T>(std::string(section) + "." + name, v);
          },
          [=](const ExperimentConfig& cfg) {
            if constexpr (std::is_floating_point_v<T>) {
              return fmt(field(const_cast<ExperimentConfig&>(cfg)));
            } else {
              return std::to_string(field(const_cast<ExperimentConfig&>(cfg)));
            }
          }};
}

template <typename F>
Key flag(const char* section, const char* name, F field) {
  return {section, name,
          [=](Ctx& c, const std::string& v) { field(c.cfg) = parse_bool(std::string(section) + "." + name, v); },
          [=](const ExperimentConfig& cfg) {
            return std::string(field(const_cast<ExperimentConfig&>(cfg)) ? "true" : "false");
          }};
}

template <typename F>
Key text(const char* section, const char* name, F field) {
  return {section, name, [=](Ctx& c, const std::string& v) { field(c.cfg) = v; },
          [=](const ExperimentConfig& cfg) { return field(const_cast<ExperimentConfig&>(cfg)); }};
}

template <typename F>
Key path(const char* section, const char* name, F field) {
  return {section, name, [=](Ctx& c, const std::string& v) { field(c.cfg) = resolve(c, v); },
          [=](const ExperimentConfig& cfg) { return field(const_cast<ExperimentConfig&>(cfg)).string(); }};
}

#define F(expr) [](ExperimentConfig& c) -> auto& { return c.expr; }

const std::vector<Key>& keys() {
  static const std::vector<Key> k = {
      text("experiment", "name", F(name)),
      num<std::uint64_t>("experiment", "seed", F(seed)),
      path("experiment", "output_dir", F(output_dir)),
      flag("experiment", "deterministic", F(deterministic)),
      num<int>("experiment", "threads", F(threads)),

      path("data", "wav_dir", F(data.wav_dir)),
      num<std::size_t>("data", "chunk_len", F(data.chunk_len)),
      num<std::size_t>("data", "chunks_per_source", F(data.chunks_per_source)),
      num<double>("data", "split_train", F(data.split_train)),
      num<double>("data", "split_valid", F(data.split_valid)),
      num<double>("data", "split_test", F(data.split_test)),
      num<int>("data", "bits", F(data.bits)),
      num<int>("data", "mu", F(data.mu)),

      num<int>("dsp", "sample_rate", F(mel.sample_rate)),
      num<int>("dsp", "n_fft", F(mel.n_fft)),
      num<int>("dsp", "hop", F(mel.hop)),
      num<int>("dsp", "n_mels", F(mel.n_mels)),
      num<double>("dsp", "fmin", F(mel.fmin)),
      num<double>("dsp", "fmax", F(mel.fmax)),
      num<int>("dsp", "f0_frame", F(f0.frame)),
      num<int>("dsp", "f0_hop", F(f0.hop)),
      num<double>("dsp", "f0_min", F(f0.fmin)),
      num<double>("dsp", "f0_max", F(f0.fmax)),
      num<double>("dsp", "f0_threshold", F(f0.threshold)),

      {"scheme", "kind",
       [](Ctx& c, const std::string& v) { c.cfg.scheme.kind = scheme_kind_from_string(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.scheme.kind)); }},
      num<int>("scheme", "K", F(scheme.K)),
      {"scheme", "squash", [](Ctx& c, const std::string& v) { c.cfg.scheme.squash = squash_from_string(v); },
       [](const ExperimentConfig& c) { return std::string(to_string(c.scheme.squash)); }},
      num<double>("scheme", "var_floor", F(scheme.var_floor)),

      num<int>("model", "n_blocks", F(model.n_blocks)),
      num<int>("model", "n_flows", F(model.n_flows)),
      num<int>("model", "width", F(model.width)),
      num<int>("model", "n_layers", F(model.n_layers)),
      num<double>("model", "scale_cap", F(model.scale_cap)),
      num<int>("model", "deq_n_blocks", F(model.deq_n_blocks)),
      num<int>("model", "deq_n_flows", F(model.deq_n_flows)),
      num<int>("model", "deq_width", F(model.deq_width)),
      num<int>("model", "deq_n_layers", F(model.deq_n_layers)),
      num<double>("model", "noise_scale", F(model.noise_scale)),

      num<double>("train", "lr", F(train.lr)),
      num<int>("train", "decay_every", F(train.decay_every)),
      num<double>("train", "decay_factor", F(train.decay_factor)),
      num<int>("train", "batch_size", F(train.batch_size)),
      num<int>("train", "max_iters", F(train.max_iters)),
      num<double>("train", "clip_norm", F(train.clip_norm)),
      num<int>("train", "init_batch", F(train.init_batch)),
      num<int>("train", "eval_every", F(train.eval_every)),
      num<int>("train", "eval_examples", F(train.eval_examples)),
      num<int>("train", "checkpoint_every", F(checkpoint_every)),
      num<double>("train", "beta1", F(train.adam.beta1)),
      num<double>("train", "beta2", F(train.adam.beta2)),
      num<double>("train", "eps", F(train.adam.eps)),

      path("synth", "checkpoint", F(synth.checkpoint)),
      text("synth", "split", F(synth.split)),
      num<double>("synth", "temperature", F(synth.temperature)),
      num<int>("synth", "max_files", F(synth.max_files)),
      flag("synth", "dump_spectrograms", F(synth.dump_spectrograms)),

      path("eval", "ref_dir", F(eval.ref_dir)),
      path("eval", "syn_dir", F(eval.syn_dir)),
      num<int>("eval", "n_mfcc", F(metrics.n_mfcc)),
      num<int>("eval", "seg_len", F(metrics.seg_len)),
      flag("eval", "mcd_standard_constant", F(metrics.mcd_standard_constant)),

      {"report", "inputs",
       [](Ctx& c, const std::string& v) {
         c.cfg.report.inputs.clear();
         for (const auto& s : split_list(v)) c.cfg.report.inputs.push_back(resolve(c, s));
       },
       [](const ExperimentConfig& c) {
         std::string out;
         for (const auto& p : c.report.inputs) out += (out.empty() ? "" : ", ") + p.string();
         return out;
       }},
      {"report", "labels", [](Ctx& c, const std::string& v) { c.cfg.report.labels = split_list(v); },
       [](const ExperimentConfig& c) {
         std::string out;
         for (const auto& s : c.report.labels) out += (out.empty() ? "" : ", ") + s;
         return out;
       }},
  };
  return k;
}

#undef F

}  // namespace

void ExperimentConfig::validate() const {
  if (data.chunk_len == 0) fail(ErrorKind::Parameter, "data.chunk_len must be positive");
  if (data.chunks_per_source == 0) fail(ErrorKind::Parameter, "data.chunks_per_source must be positive");
  if (data.bits < 2 || data.bits > 16) fail(ErrorKind::Parameter, "data.bits must lie in [2, 16]");
  if (data.mu < 0) fail(ErrorKind::Parameter, "data.mu must be >= 0");
  if (mel.hop < 1 || mel.n_fft < mel.hop) fail(ErrorKind::Parameter, "dsp.hop must lie in [1, n_fft]");
  if (model.n_blocks < 1 || model.n_flows < 1 || model.width < 1 || model.n_layers < 0) {
    fail(ErrorKind::Parameter, "model sizes must be positive");
  }
  if (model.variational && (model.deq_n_blocks < 1 || model.deq_n_flows % model.deq_n_blocks != 0)) {
    fail(ErrorKind::Parameter, "model.deq_n_flows must be a positive multiple of deq_n_blocks");
  }
  if (data.chunk_len % (std::size_t{1} << model.n_blocks) != 0) {
    fail(ErrorKind::Parameter, "data.chunk_len must be divisible by 2^n_blocks");
  }
  if (!report.labels.empty() && report.labels.size() != report.inputs.size()) {
    fail(ErrorKind::Parameter, "report.labels must match report.inputs in length");
  }
  if (synth.temperature < 0.0) fail(ErrorKind::Parameter, "synth.temperature must be >= 0");
  train.validate();
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorKind::Format, std::string("config: ") + e.what());
  }
  ExperimentConfig cfg;
  Ctx ctx{cfg, base_dir};
  std::set<std::string> known_sections;
  for (const Key& k : keys()) known_sections.insert(k.section);
  for (const auto& [section, body] : tree) {
    if (!known_sections.contains(section)) fail(ErrorKind::Parameter, "config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) {
      fail(ErrorKind::Parameter, "config: key '" + section + "' outside any section");
    }
    for (const auto& [name, value] : body) {
      const Key* match = nullptr;
      for (const Key& k : keys()) {
        if (section == k.section && name == k.name) match = &k;
      }
      if (!match) fail(ErrorKind::Parameter, "config: unknown key '" + name + "' in [" + section + "]");
      match->set(ctx, trim(value.data()));
    }
  }
  cfg.model.n_mels = cfg.mel.n_mels;
  cfg.model.variational = cfg.scheme.kind == SchemeKind::Variational;
  cfg.train.scheme = cfg.scheme;
  cfg.train.seed = cfg.seed;
  cfg.metrics.mel = cfg.mel;
  cfg.metrics.f0 = cfg.f0;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IO, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string serialize_config(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const Key& k : keys()) {
    if (section != k.section) {
      section = k.section;
      out += (out.empty() ? "[" : "\n[") + section + "]\n";
    }
    out += std::string(k.name) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

}  // namespace deqflow
