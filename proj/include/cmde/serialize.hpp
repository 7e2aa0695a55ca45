#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "cmde/ensemble.hpp"
#include "cmde/learner.hpp"
#include "cmde/nets.hpp"
#include "cmde/numerics.hpp"

namespace cmde {

using Json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

// Shortest text that reads back to the same double (at most 17 significant digits).
std::string format_double(double value);
// Strict parse of a full field; throws kParseError naming `where` on failure.
double parse_double(std::string_view text, std::string_view where);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& doc);

// Header line plus one line per matrix row.
void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                      const DenseMatrix& values);

Json to_json(const MlpNetwork& net);
MlpNetwork network_from_json(const Json& doc);

Json to_json(const CoregionalizationSpec& spec);
CoregionalizationSpec spec_from_json(const Json& doc);

Json to_json(const NetworkArchitecture& arch);
NetworkArchitecture architecture_from_json(const Json& doc);

Json to_json(const ModalityPlan& plan);
ModalityPlan modality_plan_from_json(const Json& doc);

Json to_json(const TrainingConfig& config);
TrainingConfig training_config_from_json(const Json& doc);

Json to_json(const Baselearner& learner);
Baselearner baselearner_from_json(const Json& doc);

Json to_json(const Cmde& cmde);
Cmde cmde_from_json(const Json& doc);

}  // namespace cmde
