#pragma once

#include <map>
#include <string>

namespace jigsaw {

/// Flat `key = value` text. '#' starts a comment; blank lines are skipped.
/// Duplicate keys and lines without '=' are errors (std::invalid_argument).
std::map<std::string, std::string> parse_kv(const std::string& text);
std::string format_kv(const std::map<std::string, std::string>& kv);

}  // namespace jigsaw
