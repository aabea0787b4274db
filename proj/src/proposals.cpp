#include "fsdet/proposals.hpp"

#include "fsdet/error.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

namespace fsdet {

void ProposalConfig::validate() const {
    if (anchor_scales.empty() || aspect_ratios.empty()) {
        throw InvalidArgument("ProposalConfig: empty scale or aspect list");
    }
    for (double s : anchor_scales) {
        if (!(s > 0.0)) throw InvalidArgument("ProposalConfig: scales must be positive");
    }
    for (double a : aspect_ratios) {
        if (!(a > 0.0)) throw InvalidArgument("ProposalConfig: aspects must be positive");
    }
    if (max_proposals < 0) throw InvalidArgument("ProposalConfig: negative max_proposals");
}

void PurifyConfig::validate() const {
    if (!(h >= 0.0 && h < 1.0)) throw InvalidArgument("PurifyConfig: h must lie in [0,1)");
}

std::vector<Box> anchor_proposals(std::span<const Peak> peaks, const Box& support_box,
                                  int image_width, int image_height, const ProposalConfig& cfg) {
    cfg.validate();
    if (!support_box.valid()) throw InvalidArgument("anchor_proposals: invalid support box");
    std::vector<Box> out;
    const std::size_t limit = static_cast<std::size_t>(cfg.max_proposals);
    for (const Peak& p : peaks) {
        // Peak (x, y) is a pixel index; its center is at +0.5.
        const double cx = p.x + 0.5;
        const double cy = p.y + 0.5;
        for (double scale : cfg.anchor_scales) {
            for (double aspect : cfg.aspect_ratios) {
                if (out.size() >= limit) return out;
                const double root = std::sqrt(aspect);
                const Box anchor{cx, cy, scale * root * support_box.w, scale / root * support_box.h};
                Box clipped;
                if (clip_box(anchor, image_width, image_height, clipped)) out.push_back(clipped);
            }
        }
    }
    return out;
}

std::vector<Box> load_external_proposals(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open proposal file " + path.string());
    std::vector<Box> boxes;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::vector<double> vals;
        std::string tok;
        while (ss >> tok) {
            double v = 0.0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc() || ptr != tok.data() + tok.size()) {
                throw IoError(path.string() + ":" + std::to_string(line_no) +
                              ": not a number: '" + tok + "'");
            }
            vals.push_back(v);
        }
        if (vals.empty()) continue;
        Box b;
        if (vals.size() == 4) b = Box{vals[0], vals[1], vals[2], vals[3]};
        if (vals.size() != 4 || !b.valid()) {
            throw IoError(path.string() + ":" + std::to_string(line_no) +
                          ": expected 'cx cy w h' with positive size");
        }
        boxes.push_back(b);
    }
    return boxes;
}

void save_proposals(const std::filesystem::path& path, std::span<const Box> boxes) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "# cx cy w h\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const Box& b : boxes) out << b.cx << ' ' << b.cy << ' ' << b.w << ' ' << b.h << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

double purification_ratio(const IntegralImage& ii, const Box& b) {
    const PixelRect r = member_pixels(b, ii.width(), ii.height());
    if (r.empty()) return -1.0;
    return ii.rect_sum(r) / static_cast<double>(r.count());
}

std::vector<Box> purify(const DensityMap& map, std::span<const Box> boxes, const PurifyConfig& cfg) {
    cfg.validate();
    const IntegralImage ii(map);
    std::vector<Box> kept;
    for (const Box& b : boxes) {
        const double ratio = purification_ratio(ii, b);
        if (ratio >= 0.0 && ratio >= cfg.h) kept.push_back(b);
    }
    return kept;
}

}  // namespace fsdet
