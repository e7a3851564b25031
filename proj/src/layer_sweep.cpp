#include "ccb/layer_sweep.hpp"

#include <algorithm>
#include <cstdio>

#include "ccb/errors.hpp"
#include "parallel.hpp"

namespace ccb {

namespace {

std::string provenance(const TraceSet& set) { return set.header.model_id + "/" + set.header.dataset_id; }

}  // namespace

double normalized_depth(int layer_index, int num_layers) {
  if (num_layers < 2) throw ValidationError("normalized depth needs at least two layers");
  if (layer_index < 0 || layer_index >= num_layers) throw ValidationError("layer index out of range");
  return static_cast<double>(layer_index) / static_cast<double>(num_layers - 1);
}

SweepResult run_sweep(const TraceSet& train, int folds, std::uint64_t seed, double lambda) {
  validate(train);
  const int layers = train.header.num_layers;
  const auto y = labels_of(train);

  SweepResult out;
  out.num_layers = layers;
  out.hidden_dim = train.header.hidden_dim;
  out.folds = folds;
  out.seed = seed;
  out.per_layer.resize(static_cast<std::size_t>(layers));
  detail::parallel_for(out.per_layer.size(), [&](std::size_t l) {
    const int layer = static_cast<int>(l);
    try {
      const auto x = layer_matrix(train, layer);
      out.per_layer[l] = {layer, normalized_depth(layer, layers), cross_val_auroc(x, y, folds, seed, lambda)};
    } catch (const DegenerateInputError& e) {
      throw DegenerateInputError("layer " + std::to_string(layer) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError("layer " + std::to_string(layer) + ": " + e.what());
    }
  });

  for (const auto& s : out.per_layer) {
    if (s.cv_auroc > out.per_layer[out.l_opt].cv_auroc) out.l_opt = s.layer_index;
  }
  out.final_layer_auroc = out.per_layer.back().cv_auroc;
  return out;
}

ProbeModel train_layer_probe(const TraceSet& train, int layer, double lambda) {
  validate(train);
  auto probe = train_probe(layer_matrix(train, layer), labels_of(train), layer, lambda);
  probe.train_meta = provenance(train);
  return probe;
}

ProbeModel train_optimal_probe(const TraceSet& train, const SweepResult& sweep, double lambda) {
  if (sweep.num_layers != train.header.num_layers || sweep.hidden_dim != train.header.hidden_dim) {
    throw ValidationError("sweep shape (L=" + std::to_string(sweep.num_layers) + ", D=" +
                          std::to_string(sweep.hidden_dim) + ") does not match trace (L=" +
                          std::to_string(train.header.num_layers) + ", D=" +
                          std::to_string(train.header.hidden_dim) + ")");
  }
  return train_layer_probe(train, sweep.l_opt, lambda);
}

std::vector<EmergencePoint> emergence_curve(const SweepResult& sweep) {
  std::vector<EmergencePoint> out;
  out.reserve(sweep.per_layer.size());
  for (const auto& s : sweep.per_layer) out.push_back({s.normalized_depth, s.cv_auroc});
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.normalized_depth < b.normalized_depth; });
  return out;
}

std::string emergence_csv(const SweepResult& sweep) {
  std::string out = "normalized_depth,cv_auroc\n";
  char line[64];
  for (const auto& p : emergence_curve(sweep)) {
    std::snprintf(line, sizeof line, "%.6f,%.6f\n", p.normalized_depth, p.cv_auroc);
    out += line;
  }
  return out;
}

nlohmann::json to_json(const SweepResult& sweep) {
  nlohmann::ordered_json j;
  j["num_layers"] = sweep.num_layers;
  j["hidden_dim"] = sweep.hidden_dim;
  j["l_opt"] = sweep.l_opt;
  j["final_layer_auroc"] = sweep.final_layer_auroc;
  j["folds"] = sweep.folds;
  j["seed"] = sweep.seed;
  auto& layers = j["per_layer"] = nlohmann::ordered_json::array();
  for (const auto& s : sweep.per_layer) {
    layers.push_back(
        {{"layer_index", s.layer_index}, {"normalized_depth", s.normalized_depth}, {"cv_auroc", s.cv_auroc}});
  }
  return j;
}

SweepResult sweep_from_json(const nlohmann::json& j) {
  SweepResult s;
  try {
    s.num_layers = j.at("num_layers").get<int>();
    s.hidden_dim = j.at("hidden_dim").get<int>();
    s.l_opt = j.at("l_opt").get<int>();
    s.final_layer_auroc = j.at("final_layer_auroc").get<double>();
    s.folds = j.value("folds", kDefaultFolds);
    s.seed = j.value("seed", std::uint64_t{42});
    for (const auto& row : j.at("per_layer")) {
      s.per_layer.push_back({row.at("layer_index").get<int>(), row.at("normalized_depth").get<double>(),
                             row.at("cv_auroc").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed sweep JSON: ") + e.what());
  }
  if (static_cast<int>(s.per_layer.size()) != s.num_layers || s.l_opt < 0 || s.l_opt >= s.num_layers) {
    throw ValidationError("sweep JSON is inconsistent");
  }
  return s;
}

}  // namespace ccb
