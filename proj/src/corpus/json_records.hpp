#pragma once

#include "json.hpp"
#include "perfalign/corpus.hpp"

namespace perfalign {

nlohmann::json to_json(const Solution& s);
Solution solution_from_json_record(const nlohmann::json& j);

}  // namespace perfalign
