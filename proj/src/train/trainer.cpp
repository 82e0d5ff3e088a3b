#include "semisup/train/trainer.hpp"

namespace semisup::train {

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::Supervised: return "supervised";
    case Algorithm::Pi: return "pi";
    case Algorithm::MeanTeacher: return "mean_teacher";
    case Algorithm::TemporalEnsembling: return "temporal_ensembling";
  }
  return "?";
}

Algorithm algorithm_from_name(const std::string& name) {
  if (name == "supervised") return Algorithm::Supervised;
  if (name == "pi") return Algorithm::Pi;
  if (name == "mean_teacher") return Algorithm::MeanTeacher;
  if (name == "temporal_ensembling") return Algorithm::TemporalEnsembling;
  throw ConfigError("unknown algorithm '" + name +
                    "' (expected supervised|pi|mean_teacher|temporal_ensembling)");
}

}  // namespace semisup::train
