#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinnkit/error.hpp"
#include "pinnkit/graph.hpp"
#include "pinnkit/solver.hpp"

namespace pinnkit {

/// Checkpoint layout (JSON):
///
///   {
///     "format_version": 1,
///     "parameters": { "<name>": { "shape": [rows, cols], "values": [...] } },
///     "optimizer":  { "step": n, "m": { "<name>": [...] }, "v": { "<name>": [...] } }
///   }
///
/// Names are those from trainable_parameters(); values are row-major float64
/// written with round-trip precision. "optimizer" may be absent.
inline constexpr int kCheckpointVersion = 1;

inline void checkpoint_save(const std::filesystem::path& path, const std::vector<ParamRef>& params,
                            const AdamState* state = nullptr) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointVersion;
  auto& ps = doc["parameters"] = nlohmann::json::object();
  for (const auto& p : params) {
    ps[p.name] = {{"shape", {p.tensor->rows(), p.tensor->cols()}}, {"values", p.tensor->to_vector()}};
  }
  if (state && !state->m.empty()) {
    if (state->m.size() != params.size()) throw DimensionError("checkpoint_save: optimizer state mismatch");
    nlohmann::json m = nlohmann::json::object(), v = nlohmann::json::object();
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[params[i].name] = state->m[i];
      v[params[i].name] = state->v[i];
    }
    doc["optimizer"] = {{"step", state->step}, {"m", m}, {"v", v}};
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw ContractError("checkpoint_save: cannot write " + tmp.string());
    out << doc.dump(1) << '\n';
    if (!out) throw ContractError("checkpoint_save: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Restores parameters (and optimizer state when `state` is given) in place.
/// The file must hold exactly the registered names with matching shapes.
inline void checkpoint_load(const std::filesystem::path& path, const std::vector<ParamRef>& params,
                            AdamState* state = nullptr) {
  std::ifstream in(path);
  if (!in) throw CheckpointParseError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointParseError(path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kCheckpointVersion) {
      throw CheckpointIncompatibleError("unsupported format_version " + doc["format_version"].dump());
    }
    const auto& ps = doc.at("parameters");
    std::set<std::string> expected;
    for (const auto& p : params) expected.insert(p.name);
    for (const auto& [name, _] : ps.items()) {
      if (!expected.count(name)) throw CheckpointIncompatibleError("unexpected parameter '" + name + "'");
    }
    std::vector<Tensor> loaded;
    for (const auto& p : params) {
      if (!ps.contains(p.name)) throw CheckpointIncompatibleError("missing parameter '" + p.name + "'");
      const auto& e = ps.at(p.name);
      const auto shape = e.at("shape").get<std::vector<std::size_t>>();
      auto values = e.at("values").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != p.tensor->rows() || shape[1] != p.tensor->cols()) {
        throw CheckpointIncompatibleError("shape of '" + p.name + "' is " + e.at("shape").dump() +
                                          ", expected " + p.tensor->shape_str());
      }
      if (values.size() != shape[0] * shape[1]) {
        throw CheckpointParseError("'" + p.name + "' has " + std::to_string(values.size()) + " values");
      }
      loaded.push_back(Tensor(shape[0], shape[1], std::move(values)));
    }
    AdamState restored;
    if (state && doc.contains("optimizer")) {
      const auto& o = doc.at("optimizer");
      restored.step = o.at("step").get<long>();
      for (std::size_t i = 0; i < params.size(); ++i) {
        restored.m.push_back(o.at("m").at(params[i].name).get<std::vector<double>>());
        restored.v.push_back(o.at("v").at(params[i].name).get<std::vector<double>>());
        if (restored.m.back().size() != loaded[i].size() || restored.v.back().size() != loaded[i].size()) {
          throw CheckpointIncompatibleError("optimizer state of '" + params[i].name + "' has wrong size");
        }
      }
    }
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].tensor = loaded[i].requires_grad();
    if (state) *state = std::move(restored);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointParseError(path.string() + ": " + e.what());
  }
}

}  // namespace pinnkit
