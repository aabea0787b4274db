#include "cli.hpp"

#include "fsdet/error.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fsdet::cli {
namespace {

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string scalar_text(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) return v.dump();
    throw InvalidArgument("unsupported config value " + v.dump());
}

// One config entry, already reduced to flag form.
struct Entry {
    std::string key;
    std::vector<std::string> values;
    bool is_flag = false;
    bool flag_on = false;
};

std::vector<Entry> json_entries(const Json& root, const std::string& sub) {
    if (!root.is_object()) throw InvalidArgument("config root must be an object");
    // Top-level keys apply to every subcommand; a section named after the
    // subcommand overrides them.
    Json merged = Json::object();
    for (const auto& [key, v] : root.items())
        if (!v.is_object()) merged[key] = v;
    if (root.contains(sub) && root.at(sub).is_object()) merged.update(root.at(sub));
    std::vector<Entry> out;
    for (const auto& [key, v] : merged.items()) {
        if (v.is_object()) throw InvalidArgument("nested config value for " + key);
        Entry e{key, {}, false, false};
        if (v.is_boolean()) {
            e.is_flag = true;
            e.flag_on = v.get<bool>();
        } else if (v.is_array()) {
            for (const auto& x : v) e.values.push_back(scalar_text(x));
        } else {
            e.values.push_back(scalar_text(v));
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<Entry> toml_entries(const std::string& text, const std::string& sub) {
    std::istringstream in(text);
    std::vector<CLI::ConfigItem> items;
    try {
        items = CLI::ConfigTOML().from_config(in);
    } catch (const CLI::Error& e) {
        throw InvalidArgument(std::string("bad config: ") + e.what());
    }
    std::vector<Entry> out;
    for (const auto& it : items) {
        if (it.name == "++" || it.name == "--") continue;  // section markers
        if (!it.parents.empty() && !(it.parents.size() == 1 && it.parents[0] == sub)) continue;
        Entry e{it.name, {}, false, false};
        if (it.inputs.size() == 1 && (it.inputs[0] == "true" || it.inputs[0] == "false")) {
            e.is_flag = true;
            e.flag_on = it.inputs[0] == "true";
        } else {
            e.values = it.inputs;
        }
        out.push_back(std::move(e));
    }
    return out;
}

bool sets_key(const std::vector<std::string>& args, const std::string& key) {
    const std::string flag = "--" + key;
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
    });
}

}  // namespace

std::vector<std::string> expand_config(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0].empty() || args[0][0] == '-') return args;
    const std::string sub = args[0];

    std::vector<std::string> rest;
    std::string config;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config = args[++i];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config = args[i].substr(9);
        } else {
            rest.push_back(args[i]);
        }
    }
    std::vector<std::string> out{sub};
    if (!config.empty()) {
        const std::string text = read_text(config);
        const auto first = text.find_first_not_of(" \t\r\n");
        std::vector<Entry> entries;
        if (first != std::string::npos && text[first] == '{') {
            Json root;
            try {
                root = Json::parse(text);
            } catch (const Json::exception& e) {
                throw InvalidArgument(std::string("bad config: ") + e.what());
            }
            entries = json_entries(root, sub);
        } else {
            entries = toml_entries(text, sub);
        }
        for (const auto& e : entries) {
            if (e.key == "config") throw InvalidArgument("config files cannot nest");
            if (sets_key(rest, e.key)) continue;
            if (e.is_flag) {
                if (e.flag_on) out.push_back("--" + e.key);
            } else if (!e.values.empty()) {
                out.push_back("--" + e.key);
                out.insert(out.end(), e.values.begin(), e.values.end());
            }
        }
        out.push_back("--config=" + config);
    }
    out.insert(out.end(), rest.begin(), rest.end());
    return out;
}

void echo_config(const CLI::App& sub) {
    std::cerr << "# resolved config: " << sub.get_name() << "\n"
              << sub.config_to_str(true, false) << std::flush;
}

std::vector<SupportSpec> parse_support(const std::string& spec) {
    std::vector<SupportSpec> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        // Split the four trailing numbers off so image paths may contain ':'.
        std::array<double, 4> v{};
        std::string head = item;
        for (int k = 3; k >= 0; --k) {
            const auto pos = head.rfind(':');
            if (pos == std::string::npos) throw InvalidArgument("support must be IMG:cx:cy:w:h, got " + item);
            try {
                std::size_t used = 0;
                const std::string num = head.substr(pos + 1);
                v[k] = std::stod(num, &used);
                if (used != num.size()) throw std::invalid_argument(num);
            } catch (const std::exception&) {
                throw InvalidArgument("bad number in support " + item);
            }
            head.resize(pos);
        }
        if (head.empty()) throw InvalidArgument("support without image: " + item);
        const Box b{v[0], v[1], v[2], v[3]};
        if (!b.valid()) throw InvalidArgument("support box must have positive size: " + item);
        out.push_back({head, b});
    }
    if (out.empty()) throw InvalidArgument("at least one support exemplar is required");
    return out;
}

Image render_overlays(const Image& img, const std::vector<Overlay>& layers) {
    Image out(img.width(), img.height(), 3);
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(x, y, img.channels() == 3 ? c : 0);
    const auto put = [&](int x, int y, const std::array<float, 3>& col) {
        if (x < 0 || y < 0 || x >= out.width() || y >= out.height()) return;
        for (int c = 0; c < 3; ++c) out.at(x, y, c) = col[c];
    };
    for (const auto& layer : layers) {
        for (const auto& b : layer.boxes) {
            const int x0 = static_cast<int>(std::lround(b.left()));
            const int x1 = static_cast<int>(std::lround(b.right())) - 1;
            const int y0 = static_cast<int>(std::lround(b.top()));
            const int y1 = static_cast<int>(std::lround(b.bottom())) - 1;
            for (int x = x0; x <= x1; ++x) {
                put(x, y0, layer.color);
                put(x, y1, layer.color);
            }
            for (int y = y0; y <= y1; ++y) {
                put(x0, y, layer.color);
                put(x1, y, layer.color);
            }
        }
    }
    return out;
}

std::string normalize_image_path(const std::string& image, const std::filesystem::path& base) {
    std::filesystem::path p(image);
    if (p.is_relative()) p = base / p;
    return std::filesystem::weakly_canonical(std::filesystem::absolute(p)).string();
}

LoadedHead load_head(const std::filesystem::path& ckpt, RanConfig requested, bool l_set, bool w_set,
                     bool h_set) {
    LoadedHead out{load_checkpoint(ckpt), requested};
    const auto side = sidecar_path(ckpt);
    if (std::filesystem::exists(side)) {
        std::ifstream in(side);
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::exception& e) {
            throw IoError("bad sidecar " + side.string() + ": " + e.what());
        }
        const RanConfig stored = ran_config_from_json(j.value("ran", Json::object()));
        if (w_set && stored.patch_width != requested.patch_width)
            throw CompatibilityError("checkpoint was trained with patch width " +
                                     std::to_string(stored.patch_width));
        if (h_set && stored.patch_height != requested.patch_height)
            throw CompatibilityError("checkpoint was trained with patch height " +
                                     std::to_string(stored.patch_height));
        if (stored.embedding_length != out.head.embedding_length())
            throw CompatibilityError("sidecar and checkpoint disagree on embedding length");
        out.ran.patch_width = stored.patch_width;
        out.ran.patch_height = stored.patch_height;
        out.ran.lambda_w = stored.lambda_w;
        out.ran.lambda_h = stored.lambda_h;
    }
    if (l_set && requested.embedding_length != out.head.embedding_length())
        throw CompatibilityError("checkpoint has embedding length " +
                                 std::to_string(out.head.embedding_length()) + ", requested " +
                                 std::to_string(requested.embedding_length));
    out.ran.embedding_length = out.head.embedding_length();
    out.ran.validate();
    return out;
}

}  // namespace fsdet::cli
