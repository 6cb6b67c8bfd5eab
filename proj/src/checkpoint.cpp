// SPDX-License-Identifier: Apache-2.0
#include "deqflow/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include "deqflow/error.hpp"
#include "json.hpp"

namespace deqflow {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'D', 'Q', 'F', 'L', 'O', 'W', 'C', 'K'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

json architecture_json(const FlowConfig& c) {
  return json{{"n_mels", c.n_mels},
              {"n_blocks", c.n_blocks},
              {"n_flows", c.n_flows},
              {"width", c.width},
              {"n_layers", c.n_layers},
              {"scale_cap", c.scale_cap},
              {"variational", c.variational},
              {"deq_n_blocks", c.deq_n_blocks},
              {"deq_n_flows", c.deq_n_flows},
              {"deq_width", c.deq_width},
              {"deq_n_layers", c.deq_n_layers},
              {"noise_scale", c.noise_scale}};
}

FlowConfig architecture_from_json(const json& j) {
  FlowConfig c;
  c.n_mels = j.at("n_mels").get<int>();
  c.n_blocks = j.at("n_blocks").get<int>();
  c.n_flows = j.at("n_flows").get<int>();
  c.width = j.at("width").get<int>();
  c.n_layers = j.at("n_layers").get<int>();
  c.scale_cap = j.at("scale_cap").get<double>();
  c.variational = j.at("variational").get<bool>();
  c.deq_n_blocks = j.at("deq_n_blocks").get<int>();
  c.deq_n_flows = j.at("deq_n_flows").get<int>();
  c.deq_width = j.at("deq_width").get<int>();
  c.deq_n_layers = j.at("deq_n_layers").get<int>();
  c.noise_scale = j.at("noise_scale").get<double>();
  return c;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const FlowModel& model,
                     const std::string& metadata_json) {
  json groups = json::array();
  for (const ParamGroup& g : model.params().groups()) groups.push_back({{"name", g.name}, {"size", g.size}});
  json header{{"format", "deqflow-checkpoint"},
              {"version", kCheckpointVersion},
              {"architecture", architecture_json(model.config())},
              {"initialized", model.initialized()},
              {"param_count", model.params().size()},
              {"groups", groups},
              {"metadata", json::parse(metadata_json)}};
  const std::string h = header.dump();

  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, 0);
  put_u64(out, h.size());
  out += h;
  for (double v : model.params().values()) put_u64(out, std::bit_cast<std::uint64_t>(v));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::IO, "cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::IO, "write failed for " + path.string());
}

FlowModel load_checkpoint(const std::filesystem::path& path, const std::optional<FlowConfig>& expected) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::IO, "cannot open checkpoint " + path.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string where = "checkpoint " + path.string() + ": ";

  if (bytes.size() < 24 || std::memcmp(bytes.data(), kMagic, 8) != 0) fail(ErrorKind::Load, where + "bad magic");
  const auto version = static_cast<std::uint32_t>(get_u64(bytes.data() + 8) & 0xffffffffu);
  if (version != kCheckpointVersion) fail(ErrorKind::Load, where + "unsupported version " + std::to_string(version));
  const std::uint64_t hlen = get_u64(bytes.data() + 16);
  if (24 + hlen > bytes.size()) fail(ErrorKind::Load, where + "truncated header");

  json header;
  try {
    header = json::parse(bytes.begin() + 24, bytes.begin() + 24 + static_cast<std::ptrdiff_t>(hlen));
  } catch (const json::exception& e) {
    fail(ErrorKind::Load, where + "unreadable header: " + e.what());
  }

  FlowConfig cfg;
  try {
    cfg = architecture_from_json(header.at("architecture"));
  } catch (const json::exception& e) {
    fail(ErrorKind::Load, where + "bad architecture block: " + e.what());
  }
  if (expected && !(*expected == cfg)) {
    fail(ErrorKind::Load, where + "architecture does not match the configuration (checkpoint has " +
                              architecture_json(cfg).dump() + ")");
  }

  FlowModel model(cfg);
  const auto& groups = model.params().groups();
  const json& hg = header.at("groups");
  if (hg.size() != groups.size()) fail(ErrorKind::Load, where + "parameter group count mismatch");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (hg[i].at("name").get<std::string>() != groups[i].name ||
        hg[i].at("size").get<std::size_t>() != groups[i].size) {
      fail(ErrorKind::Load, where + "parameter group mismatch at " + groups[i].name);
    }
  }
  const std::size_t n = model.params().size();
  const std::size_t payload = 24 + hlen;
  if (bytes.size() != payload + 8 * n) fail(ErrorKind::Load, where + "payload size mismatch");
  auto values = model.params().values();
  for (std::size_t i = 0; i < n; ++i) values[i] = std::bit_cast<double>(get_u64(bytes.data() + payload + 8 * i));
  model.set_initialized(header.value("initialized", false));
  return model;
}

}  // namespace deqflow
