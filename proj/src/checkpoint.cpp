#include "dspi/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "dspi/config.hpp"

namespace dspi::ckpt {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

using nlohmann::json;

void save_checkpoint(const std::string& path, const json& config, long step, double log_alpha,
                     const std::vector<StoreRef>& stores) {
  json header;
  header["format_version"] = kFormatVersion;
  header["step"] = step;
  header["log_alpha"] = log_alpha;
  header["config"] = config;
  header["config_hash"] = config::config_hash(config);

  std::uint64_t offset = 0;
  json manifest = json::array();
  for (const auto& ref : stores) {
    json store_entry;
    store_entry["name"] = ref.name;
    store_entry["step_count"] = ref.store->step_count();
    json params = json::array();
    for (const auto& e : ref.store->entries()) {
      const std::uint64_t bytes = static_cast<std::uint64_t>(e.value.size()) * sizeof(double);
      json p;
      p["name"] = e.name;
      p["rows"] = e.value.rows();
      p["cols"] = e.value.cols();
      p["offset"] = offset;  // value, then m1, then m2, each `bytes` long
      params.push_back(std::move(p));
      offset += 3 * bytes;
    }
    store_entry["params"] = std::move(params);
    manifest.push_back(std::move(store_entry));
  }
  header["stores"] = std::move(manifest);

  const std::string header_str = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(kMagic, static_cast<std::streamsize>(std::strlen(kMagic)));
  const std::uint64_t len = header_str.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& ref : stores) {
    for (const auto& e : ref.store->entries()) {
      const auto bytes = static_cast<std::streamsize>(e.value.size() * sizeof(double));
      out.write(reinterpret_cast<const char*>(e.value.data()), bytes);
      out.write(reinterpret_cast<const char*>(e.m1.data()), bytes);
      out.write(reinterpret_cast<const char*>(e.m2.data()), bytes);
    }
  }
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");

  std::string magic(std::strlen(kMagic), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kMagic) throw CheckpointError("bad checkpoint magic");

  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len == 0 || len > (64u << 20)) throw CheckpointError("bad header length");
  std::string header_str(len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(len));
  if (!in) throw CheckpointError("truncated header");

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::parse_error& e) {
    throw CheckpointError("header parse error: " + std::string(e.what()));
  }

  LoadedCheckpoint out;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion) {
      throw CheckpointError("unsupported checkpoint format version");
    }
    out.step = header.at("step").get<long>();
    out.log_alpha = header.at("log_alpha").get<double>();
    out.config = header.at("config");

    const std::streampos payload_base = in.tellg();
    for (const auto& store_entry : header.at("stores")) {
      nn::ParamStore store;
      store.set_step_count(store_entry.at("step_count").get<long>());
      for (const auto& p : store_entry.at("params")) {
        const auto rows = p.at("rows").get<Eigen::Index>();
        const auto cols = p.at("cols").get<Eigen::Index>();
        const auto offset = p.at("offset").get<std::uint64_t>();
        auto& value = store.add(p.at("name").get<std::string>(), rows, cols);
        auto& entry = store.entries().back();
        const auto bytes = static_cast<std::streamsize>(value.size() * sizeof(double));
        in.seekg(payload_base + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(value.data()), bytes);
        in.read(reinterpret_cast<char*>(entry.m1.data()), bytes);
        in.read(reinterpret_cast<char*>(entry.m2.data()), bytes);
        if (!in) throw CheckpointError("truncated payload");
      }
      out.stores.emplace_back(store_entry.at("name").get<std::string>(), std::move(store));
    }
  } catch (const json::exception& e) {
    throw CheckpointError("malformed checkpoint header: " + std::string(e.what()));
  }
  return out;
}

}  // namespace dspi::ckpt
