/*
 * Copyright 2026 The lcp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "lcp/ensemble.hpp"

#include <algorithm>

#include <fmt/core.h>
#include <json.hpp>

#include "lcp/common.hpp"

namespace lcp {

PredictionSet ensemble_average(std::span<const PredictionSet> members) {
  if (members.empty()) throw ConfigError("ensemble needs at least one member");
  const PredictionSet& first = members.front();
  for (std::size_t m = 1; m < members.size(); ++m) {
    if (members[m].size() != first.size()) {
      throw DataError(fmt::format("ensemble member {} covers {} ids, member 0 covers {}", m, members[m].size(),
                                  first.size()));
    }
  }
  PredictionSet out;
  std::vector<double> values(members.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    const auto& id = first.ids()[i];
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto s = members[m].find(id);
      if (!s) throw DataError(fmt::format("ensemble member {} has no prediction for '{}'", m, id));
      values[m] = *s;
    }
    // sorted summation makes the mean independent of member order
    std::sort(values.begin(), values.end());
    if (values.front() == values.back()) {
      out.add(id, values.front());
      continue;
    }
    double sum = 0.0;
    for (double v : values) sum += v;
    out.add(id, std::clamp(sum / static_cast<double>(values.size()), 0.0, 1.0));
  }
  return out;
}

void DomainRouting::validate() const {
  for (Domain d : kDomains) {
    if (!variants.contains(d)) {
      throw ConfigError(fmt::format("domain routing does not cover domain '{}'", to_string(d)));
    }
  }
}

const std::string& route_by_domain(const DomainRouting& routing, const Instance& inst) {
  auto it = routing.variants.find(inst.domain);
  if (it == routing.variants.end()) {
    throw ConfigError(fmt::format("no routed checkpoint for domain '{}' (instance '{}')", to_string(inst.domain),
                                  inst.id));
  }
  return it->second;
}

void EnsembleSpec::validate() const {
  if (members.empty()) throw ConfigError("ensemble spec needs at least one member");
  for (const auto& m : members) {
    if (m.kind == EnsembleMember::Kind::routed) {
      if (!m.routing) throw ConfigError(fmt::format("member '{}' is routed but has no routing", m.name));
      m.routing->validate();
    } else if (m.path.empty()) {
      throw ConfigError(fmt::format("member '{}' has no path", m.name));
    }
  }
}

EnsembleSpec EnsembleSpec::parse(std::string_view json_text, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).string();
  };
  EnsembleSpec spec;
  try {
    const auto j = nlohmann::json::parse(json_text);
    std::size_t i = 0;
    for (const auto& mj : j.at("members")) {
      EnsembleMember m;
      m.name = mj.value("name", fmt::format("member{}", i++));
      if (mj.contains("predictions")) {
        m.kind = EnsembleMember::Kind::predictions;
        m.path = resolve(mj.at("predictions").get<std::string>());
      } else if (mj.contains("checkpoint")) {
        m.kind = EnsembleMember::Kind::checkpoint;
        m.path = resolve(mj.at("checkpoint").get<std::string>());
      } else if (mj.contains("routing")) {
        m.kind = EnsembleMember::Kind::routed;
        DomainRouting r;
        for (const auto& [k, v] : mj.at("routing").items()) r.variants[parse_domain(k)] = resolve(v.get<std::string>());
        m.routing = std::move(r);
      } else {
        throw ConfigError(fmt::format("member '{}' needs one of predictions/checkpoint/routing", m.name));
      }
      spec.members.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("malformed ensemble spec: {}", e.what()));
  } catch (const DataError& e) {
    throw ConfigError(fmt::format("malformed ensemble spec: {}", e.what()));
  }
  spec.validate();
  return spec;
}

EnsembleSpec EnsembleSpec::load(const std::filesystem::path& path) {
  return parse(read_file(path), path.parent_path());
}

PredictionSet predict_member_from_file(const EnsembleMember& member, const Dataset& ds) {
  if (member.kind != EnsembleMember::Kind::predictions) {
    throw ConfigError(fmt::format("member '{}' is not a prediction file", member.name));
  }
  const PredictionSet all = read_predictions(member.path);
  PredictionSet out;
  for (const auto& inst : ds.instances) out.add(inst.id, all.at(inst.id));
  return out;
}

PredictionSet predict_ensemble(const EnsembleSpec& spec, const Dataset& ds, const MemberPredictor& predictor) {
  spec.validate();
  std::vector<PredictionSet> outputs;
  outputs.reserve(spec.members.size());
  for (const auto& m : spec.members) {
    try {
      outputs.push_back(predictor ? predictor(m, ds) : predict_member_from_file(m, ds));
    } catch (const std::exception& e) {
      throw DataError(fmt::format("ensemble member '{}' failed: {}", m.name, e.what()));
    }
  }
  if (ds.empty()) return PredictionSet{};
  return ensemble_average(outputs);
}

}  // namespace lcp
