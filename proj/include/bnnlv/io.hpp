#pragma once

// JSON serialization of configurations, posteriors and reports, plus
// crash-safe file writes (temporary file, then rename).

#include <filesystem>
#include <string>

#include <json.hpp>

#include "bnnlv/data.hpp"
#include "bnnlv/diffcore.hpp"
#include "bnnlv/metrics.hpp"
#include "bnnlv/model.hpp"
#include "bnnlv/ncai.hpp"
#include "bnnlv/train.hpp"
#include "bnnlv/vi.hpp"

namespace bnnlv {

using Json = nlohmann::json;

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const Architecture& a);
Architecture architecture_from_json(const Json& j);

Json to_json(const PriorConfig& p);
PriorConfig priors_from_json(const Json& j);

Json to_json(const NcaiConfig& c);
NcaiConfig ncai_from_json(const Json& j);

Json to_json(const MeanFieldPosterior& q);
MeanFieldPosterior posterior_from_json(const Json& j);

Json to_json(const Standardization& s);
Standardization standardization_from_json(const Json& j);

Json to_json(const GroundTruth& g);

Json to_json(const TrainHistory& h);

// Absent metrics serialize as null.
Json to_json(const MetricsReport& r);

// Posterior, priors, method and standardization of a trained model.
Json model_to_json(const TrainResult& r, const Standardization& transform);

struct SavedModel {
  TrainResult result;  // history is not stored
  Standardization transform;
};
SavedModel model_from_json(const Json& j);

// Writes to path + ".tmp" and renames over path.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
void write_json_atomic(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

}  // namespace bnnlv
