#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "pansharp/config.hpp"

namespace pansharp {

// Plain-text key=value configuration. '#' starts a comment, blank lines are
// skipped, unknown keys and malformed lines raise ConfigError with the line
// number.

std::string serialize_network_config(const NetworkConfig& cfg);
std::string serialize_train_config(const TrainConfig& cfg);

// Parses a combined file holding both network and train keys.
void parse_config_text(const std::string& text, NetworkConfig* net, TrainConfig* train);
void load_config_file(const std::string& path, NetworkConfig* net, TrainConfig* train);

// Parses key=value text into a map; shared by the checkpoint reader.
std::map<std::string, std::string> parse_kv_text(const std::string& text);

NetworkConfig network_config_from_kv(const std::map<std::string, std::string>& kv);

}  // namespace pansharp
