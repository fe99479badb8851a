#pragma once

#include "massflow/types.hpp"

#include <iosfwd>
#include <string>

namespace massflow {

// Parses a SimConfig from a JSON document. Unknown keys are errors, and the
// parsed config is validated before being returned.
SimConfig parse_config(const std::string& json_text);
SimConfig load_config(const std::string& path);

// Serializes exactly the keys parse_config accepts, so
// parse(serialize(parse(x))) == parse(x).
std::string serialize_config(const SimConfig& cfg);

}  // namespace massflow
