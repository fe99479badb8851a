#include "massflow/config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace massflow {

namespace {

using nlohmann::json;

const std::set<std::string> kKnownKeys = {
    "n", "horizon", "dt", "scheme", "master_seed",
    "replicas", "record_stride", "u_probes"};

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(key, std::string("config field \"") + key + "\" has the wrong type");
  }
}

}  // namespace

SimConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("(document)", std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("(document)", "config must be a JSON object");

  for (const auto& item : j.items()) {
    if (!kKnownKeys.count(item.key()))
      throw ConfigError(item.key(), "unknown config key \"" + item.key() + "\"");
  }

  SimConfig cfg;
  if (!j.contains("n")) throw ConfigError("n", "config is missing required key \"n\"");
  if (!j.contains("horizon")) throw ConfigError("horizon", "config is missing required key \"horizon\"");
  if (!j.contains("dt")) throw ConfigError("dt", "config is missing required key \"dt\"");

  cfg.n = get_or<std::int64_t>(j, "n", 0);
  cfg.horizon = get_or<double>(j, "horizon", 0.0);
  cfg.dt = get_or<double>(j, "dt", 0.0);
  cfg.master_seed = get_or<std::uint64_t>(j, "master_seed", 0);
  cfg.replicas = get_or<std::int64_t>(j, "replicas", 1);
  cfg.record_stride = get_or<std::int64_t>(j, "record_stride", 1);
  cfg.u_probes = get_or<std::vector<double>>(j, "u_probes", {});
  if (j.contains("scheme")) {
    if (!j.at("scheme").is_string())
      throw ConfigError("scheme", "config field \"scheme\" must be a string");
    cfg.scheme = scheme_from_string(j.at("scheme").get<std::string>());
  }

  cfg.validate();
  return cfg;
}

SimConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("(file)", "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const SimConfig& cfg) {
  json j;
  j["n"] = cfg.n;
  j["horizon"] = cfg.horizon;
  j["dt"] = cfg.dt;
  j["scheme"] = to_string(cfg.scheme);
  j["master_seed"] = cfg.master_seed;
  j["replicas"] = cfg.replicas;
  j["record_stride"] = cfg.record_stride;
  j["u_probes"] = cfg.u_probes;
  return j.dump(2);
}

}  // namespace massflow
