#include "pansharp/config_io.hpp"

#include <fstream>
#include <sstream>

namespace pansharp {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

int64_t to_i64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        int64_t r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double to_f64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return r;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects true/false, got '" + v + "'");
}

}  // namespace

std::string serialize_network_config(const NetworkConfig& cfg) {
    std::ostringstream os;
    os << "channels=" << cfg.channels << "\n"
       << "state=" << cfg.state << "\n"
       << "expansion=" << cfg.expansion << "\n"
       << "conv1d_kernel=" << cfg.conv1d_kernel << "\n"
       << "depth_extract=" << cfg.depth_extract << "\n"
       << "depth_swap=" << cfg.depth_swap << "\n"
       << "depth_cross=" << cfg.depth_cross << "\n"
       << "scale=" << cfg.scale << "\n"
       << "ms_bands=" << cfg.ms_bands << "\n"
       << "enable_swap=" << (cfg.enable_swap ? "true" : "false") << "\n"
       << "enable_cross=" << (cfg.enable_cross ? "true" : "false") << "\n"
       << "exact_zoh=" << (cfg.exact_zoh ? "true" : "false") << "\n"
       << "precision=" << (cfg.precision == Precision::kFloat64 ? "float64" : "float32") << "\n";
    return os.str();
}

std::string serialize_train_config(const TrainConfig& cfg) {
    std::ostringstream os;
    os.precision(17);
    os << "lr_init=" << cfg.lr_init << "\n"
       << "lr_final=" << cfg.lr_final << "\n"
       << "epochs=" << cfg.epochs << "\n"
       << "clip_norm=" << cfg.clip_norm << "\n"
       << "batch_size=" << cfg.batch_size << "\n"
       << "seed=" << cfg.seed << "\n"
       << "beta1=" << cfg.beta1 << "\n"
       << "beta2=" << cfg.beta2 << "\n"
       << "adam_eps=" << cfg.adam_eps << "\n"
       << "eval_every=" << cfg.eval_every << "\n";
    return os.str();
}

namespace {

// Returns false when the key belongs to neither struct.
bool apply_key(const std::string& key, const std::string& val, NetworkConfig* net, TrainConfig* train) {
    if (net) {
        if (key == "channels") return net->channels = to_i64(val, key), true;
        if (key == "state") return net->state = to_i64(val, key), true;
        if (key == "expansion") return net->expansion = to_i64(val, key), true;
        if (key == "conv1d_kernel") return net->conv1d_kernel = to_i64(val, key), true;
        if (key == "depth_extract") return net->depth_extract = to_i64(val, key), true;
        if (key == "depth_swap") return net->depth_swap = to_i64(val, key), true;
        if (key == "depth_cross") return net->depth_cross = to_i64(val, key), true;
        if (key == "scale") return net->scale = to_i64(val, key), true;
        if (key == "ms_bands") return net->ms_bands = to_i64(val, key), true;
        if (key == "enable_swap") return net->enable_swap = to_bool(val, key), true;
        if (key == "enable_cross") return net->enable_cross = to_bool(val, key), true;
        if (key == "exact_zoh") return net->exact_zoh = to_bool(val, key), true;
        if (key == "precision") {
            if (val == "float32")
                net->precision = Precision::kFloat32;
            else if (val == "float64")
                net->precision = Precision::kFloat64;
            else
                throw ConfigError("config: precision must be float32 or float64, got '" + val + "'");
            return true;
        }
    }
    if (train) {
        if (key == "lr_init") return train->lr_init = to_f64(val, key), true;
        if (key == "lr_final") return train->lr_final = to_f64(val, key), true;
        if (key == "epochs") return train->epochs = to_i64(val, key), true;
        if (key == "clip_norm") return train->clip_norm = to_f64(val, key), true;
        if (key == "batch_size") return train->batch_size = to_i64(val, key), true;
        if (key == "seed") return train->seed = static_cast<uint64_t>(to_i64(val, key)), true;
        if (key == "beta1") return train->beta1 = to_f64(val, key), true;
        if (key == "beta2") return train->beta2 = to_f64(val, key), true;
        if (key == "adam_eps") return train->adam_eps = to_f64(val, key), true;
        if (key == "eval_every") return train->eval_every = to_i64(val, key), true;
    }
    return false;
}

}  // namespace

void parse_config_text(const std::string& text, NetworkConfig* net, TrainConfig* train) {
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected key=value, got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        try {
            if (!apply_key(key, val, net, train))
                throw ConfigError("config: unknown key '" + key + "'");
        } catch (const ConfigError& e) {
            throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void load_config_file(const std::string& path, NetworkConfig* net, TrainConfig* train) {
    std::ifstream f(path);
    if (!f) throw FormatError("config: cannot open '" + path + "'");
    std::ostringstream os;
    os << f.rdbuf();
    parse_config_text(os.str(), net, train);
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t eq = t.find('=');
        if (eq == std::string::npos) continue;
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return kv;
}

NetworkConfig network_config_from_kv(const std::map<std::string, std::string>& kv) {
    NetworkConfig cfg;
    for (const auto& [key, val] : kv) apply_key(key, val, &cfg, nullptr);
    cfg.validate();
    return cfg;
}

}  // namespace pansharp
