// SPDX-License-Identifier: Apache-2.0
#include "deqflow/commands.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "deqflow/audio_io.hpp"
#include "deqflow/checkpoint.hpp"
#include "deqflow/companding.hpp"
#include "deqflow/parallel.hpp"
#include "json.hpp"

namespace deqflow {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kCacheMagic[8] = {'D', 'Q', 'C', 'A', 'C', 'H', 'E', '1'};

fs::path prepare_dir(const ExperimentConfig& c) { return c.output_dir / "prepare"; }
fs::path train_dir(const ExperimentConfig& c) { return c.output_dir / "train"; }
fs::path synth_dir(const ExperimentConfig& c) { return c.output_dir / "synth"; }

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "cache files are written little-endian");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) fail(ErrorKind::Format, path.string() + ": truncated");
  return v;
}

void write_codes(const fs::path& path, const CodeChunk& c) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IO, "cannot write " + path.string());
  out.write(kCacheMagic, sizeof kCacheMagic);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.bits));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(c.mu));
  put<std::uint64_t>(out, c.codes.size());
  for (int v : c.codes) put<std::uint16_t>(out, static_cast<std::uint16_t>(v));
}

CodeChunk read_codes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Input, "missing cache file " + path.string() + "; run prepare first");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) {
    fail(ErrorKind::Format, path.string() + ": not a cache file");
  }
  CodeChunk c;
  c.bits = static_cast<int>(get<std::uint32_t>(in, path));
  c.mu = static_cast<int>(get<std::uint32_t>(in, path));
  const auto n = get<std::uint64_t>(in, path);
  c.codes.resize(n);
  for (auto& v : c.codes) v = get<std::uint16_t>(in, path);
  return c;
}

void write_mel(const fs::path& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IO, "cannot write " + path.string());
  out.write(kCacheMagic, sizeof kCacheMagic);
  put<std::uint64_t>(out, m.rows);
  put<std::uint64_t>(out, m.cols);
  for (double v : m.data) put<double>(out, v);
}

Matrix read_mel(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Input, "missing cache file " + path.string() + "; run prepare first");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCacheMagic, 8) != 0) {
    fail(ErrorKind::Format, path.string() + ": not a cache file");
  }
  const auto rows = get<std::uint64_t>(in, path);
  const auto cols = get<std::uint64_t>(in, path);
  Matrix m(rows, cols);
  for (double& v : m.data) v = get<double>(in, path);
  return m;
}

json read_manifest(const ExperimentConfig& cfg) {
  const fs::path path = prepare_dir(cfg) / "manifest.json";
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Input, "prepared cache not found at " + path.string() + "; run prepare first");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

int threads_for(const ExperimentConfig& cfg) {
  if (deterministic()) return 1;
  return cfg.threads > 0 ? std::min(cfg.threads, worker_count()) : worker_count();
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Input, "not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string fmt(double v, const char* spec = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Parameter: return 1;
    case ErrorKind::Numeric: return 3;
    default: return 2;
  }
}

void cmd_prepare(const ExperimentConfig& cfg, std::ostream& log) {
  if (cfg.data.wav_dir.empty()) fail(ErrorKind::Parameter, "data.wav_dir is not set");
  const auto files = list_wavs(cfg.data.wav_dir);
  const fs::path cache = prepare_dir(cfg) / "cache";
  fs::create_directories(cache);

  json skipped = json::array();
  std::map<std::string, AudioBuffer> usable;
  for (const fs::path& f : files) {
    const std::string id = f.stem().string();
    try {
      AudioBuffer buf = read_wav(f);
      if (buf.sample_rate != cfg.mel.sample_rate) {
        skipped.push_back({{"file", f.filename().string()},
                           {"reason", "sample rate " + std::to_string(buf.sample_rate) + " != " +
                                          std::to_string(cfg.mel.sample_rate)}});
        continue;
      }
      if (buf.samples.size() < cfg.data.chunk_len) {
        skipped.push_back({{"file", f.filename().string()}, {"reason", "shorter than chunk_len"}});
        continue;
      }
      usable.emplace(id, std::move(buf));
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::IO) throw;
      skipped.push_back({{"file", f.filename().string()}, {"reason", e.what()}});
    }
  }
  for (const auto& s : skipped) {
    log << "skip " << s["file"].get<std::string>() << ": " << s["reason"].get<std::string>() << '\n';
  }
  if (usable.empty()) fail(ErrorKind::Input, "no usable WAV files in " + cfg.data.wav_dir.string());

  std::map<std::string, std::vector<std::string>> by_speaker;
  for (const auto& [id, buf] : usable) by_speaker[speaker_of(id)].push_back(id);
  const DatasetSplit split = split_dataset(
      by_speaker, {cfg.data.split_train, cfg.data.split_valid, cfg.data.split_test}, cfg.seed);
  for (const auto& w : split.warnings) log << "warning: " << w << '\n';
  std::map<std::string, std::string> split_of;
  for (const auto& id : split.train) split_of[id] = "train";
  for (const auto& id : split.valid) split_of[id] = "valid";
  for (const auto& id : split.test) split_of[id] = "test";

  json sources = json::array();
  std::ofstream windows(prepare_dir(cfg) / "windows.csv", std::ios::trunc);
  if (!windows) fail(ErrorKind::IO, "cannot write windows.csv");
  windows << "id,split,offset\n";
  std::size_t index = 0, n_windows = 0;
  for (const auto& [id, buf] : usable) {
    const CodeChunk codes = quantize_codes(buf, cfg.data.bits, cfg.data.mu);
    const Matrix mel = normalize_conditioning(conditioning_mel(buf, cfg.mel).frames);
    write_codes(cache / (id + ".codes"), codes);
    write_mel(cache / (id + ".mel"), mel);
    write_wav(cache / (id + ".wav"), buf);
    const ChunkSet chunks = extract_chunks(buf, cfg.data.chunk_len, cfg.data.chunks_per_source, cfg.seed + index);
    for (std::size_t off : chunks.offsets) windows << id << ',' << split_of[id] << ',' << off << '\n';
    n_windows += chunks.offsets.size();
    sources.push_back({{"id", id},
                       {"speaker", speaker_of(id)},
                       {"split", split_of[id]},
                       {"samples", buf.samples.size()},
                       {"frames", mel.rows}});
    ++index;
  }

  json manifest = {{"format", "deqflow-prepare"},
                   {"version", 1},
                   {"seed", cfg.seed},
                   {"sample_rate", cfg.mel.sample_rate},
                   {"bits", cfg.data.bits},
                   {"mu", cfg.data.mu},
                   {"chunk_len", cfg.data.chunk_len},
                   {"chunks_per_source", cfg.data.chunks_per_source},
                   {"hop", cfg.mel.hop},
                   {"n_fft", cfg.mel.n_fft},
                   {"n_mels", cfg.mel.n_mels},
                   {"counts",
                    {{"sources", usable.size()},
                     {"train", split.train.size()},
                     {"valid", split.valid.size()},
                     {"test", split.test.size()},
                     {"windows", n_windows},
                     {"skipped", skipped.size()}}},
                   {"sources", sources},
                   {"skipped", skipped}};
  std::ofstream(prepare_dir(cfg) / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
  log << "prepared " << usable.size() << " sources (" << split.train.size() << " train, " << split.valid.size()
      << " valid, " << split.test.size() << " test), " << n_windows << " windows\n";
}

TrainingSet load_prepared(const ExperimentConfig& cfg, const std::string& split) {
  const json manifest = read_manifest(cfg);
  if (manifest.at("bits").get<int>() != cfg.data.bits || manifest.at("mu").get<int>() != cfg.data.mu ||
      manifest.at("hop").get<int>() != cfg.mel.hop || manifest.at("n_mels").get<int>() != cfg.mel.n_mels ||
      manifest.at("chunk_len").get<std::size_t>() != cfg.data.chunk_len) {
    fail(ErrorKind::Input, "prepared cache does not match the configuration; rerun prepare");
  }
  TrainingSet set;
  set.chunk_len = cfg.data.chunk_len;
  set.hop = cfg.mel.hop;
  std::map<std::string, std::size_t> index;
  const fs::path cache = prepare_dir(cfg) / "cache";
  for (const auto& s : manifest.at("sources")) {
    if (s.at("split").get<std::string>() != split) continue;
    Utterance u;
    u.id = s.at("id").get<std::string>();
    u.codes = read_codes(cache / (u.id + ".codes"));
    u.mel = read_mel(cache / (u.id + ".mel"));
    index[u.id] = set.sources.size();
    set.sources.push_back(std::move(u));
  }
  std::ifstream in(prepare_dir(cfg) / "windows.csv");
  if (!in) fail(ErrorKind::Input, "prepared cache is missing windows.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string id, sp, off;
    std::getline(ss, id, ',');
    std::getline(ss, sp, ',');
    std::getline(ss, off, ',');
    if (sp != split) continue;
    const auto it = index.find(id);
    if (it == index.end()) fail(ErrorKind::Format, "windows.csv names unknown source " + id);
    set.windows.emplace_back(it->second, std::stoull(off));
  }
  return set;
}

TrainHistory cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  const TrainingSet train = load_prepared(cfg, "train");
  if (train.size() == 0) fail(ErrorKind::Input, "the train split has no windows");
  const TrainingSet valid = load_prepared(cfg, "valid");
  const fs::path dir = train_dir(cfg);
  fs::create_directories(dir);

  TrainConfig tc = cfg.train;
  tc.threads = threads_for(cfg);
  tc.dump_dir = dir;
  FlowModel model(cfg.model, cfg.seed);
  auto meta = [&](int it) {
    return json{{"experiment", cfg.name}, {"iteration", it}, {"seed", cfg.seed},
                {"scheme", to_string(cfg.scheme.kind)}}.dump();
  };
  const CheckpointHook hook = [&](int it, const FlowModel& m) {
    char name[64];
    std::snprintf(name, sizeof name, "ckpt_%06d.ckpt", it);
    save_checkpoint(dir / name, m, meta(it));
  };
  log << "training " << cfg.name << ": " << model.params().size() << " parameters, " << train.size()
      << " windows, scheme " << to_string(cfg.scheme.kind) << '\n';
  const TrainHistory h = train_loop(model, train, tc, valid.size() ? &valid : nullptr, cfg.checkpoint_every, hook);
  for (const auto& w : h.warnings) log << "warning: " << w << '\n';
  write_history_csv(dir / "history.csv", h);
  {
    std::ofstream ev(dir / "evals.csv", std::ios::trunc);
    ev << "iteration,bits_per_dim\n";
    for (const EvalRow& e : h.evals) ev << e.iteration << ',' << fmt(e.bits_per_dim) << '\n';
  }
  save_checkpoint(dir / "final.ckpt", model, meta(cfg.train.max_iters));
  if (!h.rows.empty()) {
    log << "final bits/dim " << fmt(h.rows.back().bits_per_dim, "%.4f") << ", max log-density "
        << fmt(h.max_logp_seen, "%.3f") << " nats/dim\n";
  }
  return h;
}

std::vector<fs::path> cmd_synth(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path ckpt = cfg.synth.checkpoint.empty() ? train_dir(cfg) / "final.ckpt" : cfg.synth.checkpoint;
  const FlowModel model = load_checkpoint(ckpt, cfg.model);
  const TrainingSet set = load_prepared(cfg, cfg.synth.split);
  if (set.sources.empty()) fail(ErrorKind::Input, "split '" + cfg.synth.split + "' has no sources");
  const fs::path out_dir = synth_dir(cfg) / "wav";
  const fs::path ref_dir = synth_dir(cfg) / "ref";
  const fs::path spec_dir = synth_dir(cfg) / "spec";
  fs::create_directories(out_dir);
  fs::create_directories(ref_dir);
  if (cfg.synth.dump_spectrograms) fs::create_directories(spec_dir);

  std::size_t n = set.sources.size();
  if (cfg.synth.max_files > 0) n = std::min(n, static_cast<std::size_t>(cfg.synth.max_files));
  const CounterRng rng(cfg.seed, 0x53594e5448ULL);
  const int nb = cfg.model.n_blocks;
  std::vector<fs::path> written(n);
  parallel_for(n, threads_for(cfg), [&](std::size_t i) {
    const Utterance& u = set.sources[i];
    const int length = static_cast<int>(u.mel.rows) * cfg.mel.hop;
    if (length % model.time_multiple() != 0) {
      fail(ErrorKind::Shape, u.id + ": frames*hop is not a multiple of " + std::to_string(model.time_multiple()));
    }
    const CounterRng r = rng.substream(i);
    Tensor eps(1, length);
    for (int t = 0; t < length; ++t) eps.data[t] = r.normal(static_cast<std::uint64_t>(t));
    const Tensor mel = upsample_mel(u.mel, cfg.mel.hop, 0, length);
    const Tensor y = inverse_sample(model, {shape_latent(eps, nb)}, {mel}, cfg.synth.temperature).front();

    AudioBuffer out;
    out.sample_rate = cfg.mel.sample_rate;
    out.samples.resize(static_cast<std::size_t>(length));
    for (int t = 0; t < length; ++t) {
      const double v = y.data[t];
      out.samples[t] = std::isfinite(v) ? level_to_sample(v, u.codes.mu) : 0.0;
    }
    written[i] = out_dir / (u.id + ".wav");
    write_wav(written[i], out);

    AudioBuffer ref = read_wav(prepare_dir(cfg) / "cache" / (u.id + ".wav"));
    ref.samples.resize(static_cast<std::size_t>(length), 0.0);
    write_wav(ref_dir / (u.id + ".wav"), ref);

    if (cfg.synth.dump_spectrograms) {
      MelParams mp = cfg.mel;
      mp.sample_rate = out.sample_rate;
      const Matrix m = conditioning_mel(out, mp).frames;
      write_matrix_csv(spec_dir / (u.id + ".csv"), m);
      write_matrix_pgm(spec_dir / (u.id + ".pgm"), m);
    }
  });
  log << "synthesized " << n << " file(s) into " << out_dir.string() << '\n';
  return written;
}

MetricReport cmd_eval(const ExperimentConfig& cfg, std::ostream& log) {
  const fs::path ref_dir = cfg.eval.ref_dir.empty() ? synth_dir(cfg) / "ref" : cfg.eval.ref_dir;
  const fs::path syn_dir = cfg.eval.syn_dir.empty() ? synth_dir(cfg) / "wav" : cfg.eval.syn_dir;
  std::map<std::string, fs::path> refs, syns;
  for (const auto& p : list_wavs(ref_dir)) refs[p.filename().string()] = p;
  for (const auto& p : list_wavs(syn_dir)) syns[p.filename().string()] = p;

  MetricReport report;
  std::vector<std::string> names;
  for (const auto& [name, p] : refs) {
    if (syns.contains(name)) {
      names.push_back(name);
    } else {
      report.unpaired.push_back(name);
    }
  }
  for (const auto& [name, p] : syns) {
    if (!refs.contains(name)) report.unpaired.push_back(name);
  }
  std::sort(report.unpaired.begin(), report.unpaired.end());
  for (const auto& u : report.unpaired) log << "warning: unpaired file " << u << '\n';
  if (names.empty()) fail(ErrorKind::Input, "no matching file names between " + ref_dir.string() + " and " + syn_dir.string());

  report.rows.resize(names.size());
  parallel_for(names.size(), threads_for(cfg), [&](std::size_t i) {
    const std::string id = fs::path(names[i]).stem().string();
    report.rows[i] = evaluate_pair(id, read_wav(refs[names[i]]), read_wav(syns[names[i]]), cfg.metrics);
  });
  report.aggregates = aggregate(report.rows);
  const fs::path out = cfg.output_dir / "eval";
  fs::create_directories(out);
  write_report_csv(out / "report.csv", report);
  log << "evaluated " << names.size() << " pair(s) -> " << (out / "report.csv").string() << '\n';
  for (std::size_t m = 0; m < kMetricCount; ++m) {
    const MetricAggregate& a = report.aggregates[m];
    log << "  " << kMetricNames[m] << ": " << (a.n ? fmt(a.mean, "%.4f") : std::string("n/a"));
    if (a.n >= 2) log << " +/- " << fmt(a.ci95, "%.4f");
    if (a.flagged) log << " (" << a.flagged << " flagged)";
    log << '\n';
  }
  return report;
}

void cmd_report(const ExperimentConfig& cfg, std::ostream& log) {
  std::vector<fs::path> inputs = cfg.report.inputs;
  if (inputs.empty()) inputs.push_back(cfg.output_dir / "eval" / "report.csv");
  std::vector<std::string> labels = cfg.report.labels;
  if (labels.empty()) {
    for (const auto& p : inputs) {
      const fs::path parent = p.parent_path();
      labels.push_back(parent.filename() == "eval" ? parent.parent_path().filename().string()
                                                   : parent.filename().string());
    }
  }
  const fs::path dir = cfg.output_dir / "report";
  fs::create_directories(dir);
  std::ofstream csv(dir / "comparison.csv", std::ios::trunc);
  std::ofstream md(dir / "comparison.md", std::ios::trunc);
  if (!csv || !md) fail(ErrorKind::IO, "cannot write into " + dir.string());

  csv << "model";
  md << "| model |";
  for (const char* name : kMetricNames) {
    csv << ',' << name << "_mean," << name << "_ci95," << name << "_n";
    md << ' ' << name << " |";
  }
  csv << '\n';
  md << "\n|---|";
  for (std::size_t m = 0; m < kMetricCount; ++m) md << "---|";
  md << '\n';
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const MetricReport r = read_report_csv(inputs[i]);
    csv << labels[i];
    md << "| " << labels[i] << " |";
    for (const MetricAggregate& a : r.aggregates) {
      csv << ',' << (a.n ? fmt(a.mean) : "") << ',' << (a.n >= 2 ? fmt(a.ci95) : "") << ',' << a.n;
      if (a.n == 0) {
        md << " n/a |";
      } else if (a.n < 2) {
        md << ' ' << fmt(a.mean, "%.3f") << " |";
      } else {
        md << ' ' << fmt(a.mean, "%.3f") << " ± " << fmt(a.ci95, "%.3f") << " |";
      }
    }
    csv << '\n';
    md << '\n';
  }
  log << "compared " << inputs.size() << " report(s) -> " << (dir / "comparison.csv").string() << '\n';
}

}  // namespace deqflow
