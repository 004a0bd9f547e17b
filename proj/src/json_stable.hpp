#pragma once

#include <string>

#include <json.hpp>

namespace sos::detail {

// %.17g — enough significant digits that a double survives a round trip.
std::string format_double(double value);

// Deterministic single-line dump: object keys come out sorted (nlohmann's
// default object type is ordered), floating point numbers use
// format_double. Used for every file this tool writes, so reruns are
// byte-identical.
std::string dump_stable(const nlohmann::json& value);

}  // namespace sos::detail
