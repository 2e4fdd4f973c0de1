#pragma once

// Versioned JSON checkpoint: model description, named parameter arrays with
// shapes, normalization statistics and (for the conformal baseline) the
// calibration scores.
//
//   {"format": "nigcast-checkpoint", "version": 1,
//    "model": {...}, "params": [{"name", "shape", "data"}...],
//    "norm": {...} | null, "calibration_scores": [...] | null}

#include "nigcast/conformal.hpp"
#include "nigcast/dataio.hpp"
#include "nigcast/model.hpp"
#include "nigcast/params.hpp"

#include <filesystem>
#include <optional>

#include "json.hpp"

namespace nigcast {

inline constexpr const char* kCheckpointFormat = "nigcast-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    ModelSpec spec;
    ParameterSet params;
    std::optional<NormStats> norm;
    std::optional<CalibrationSet> calibration;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ParameterSet& params);
ParameterSet params_from_json(const nlohmann::json& j);

nlohmann::json to_json(const NormStats& stats);
NormStats norm_stats_from_json(const nlohmann::json& j);

nlohmann::json to_json(const TrainHistory& history);
TrainHistory history_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Checkpoint& ckpt);
/// Throws DataError on a wrong format tag, unsupported version or a parameter
/// set that does not match the model description.
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace nigcast
