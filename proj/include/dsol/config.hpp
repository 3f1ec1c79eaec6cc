#pragma once

#include <string>
#include <vector>

#include "dsol/window.hpp"

namespace dsol {

/// Flat `key = value` text, '#' starts a comment. Keys are prefixed by module
/// (select., stereo., align., pba., window., pyramid.). Unknown keys and malformed values
/// throw ConfigError naming the line. The result is validated.
OdometryConfig ParseConfig(const std::string& text, OdometryConfig base = {});

OdometryConfig LoadConfig(const std::string& path, OdometryConfig base = {});

/// Every accepted key, sorted.
std::vector<std::string> ConfigKeys();

}  // namespace dsol
