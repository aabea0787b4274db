#include "fsdet/eval.hpp"

#include "fsdet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace fsdet {

PrCurve precision_recall(const ImageDetections& dets, const GroundTruth& gts, int category,
                         double iou_threshold) {
    if (dets.size() > gts.size()) {
        throw InvalidArgument("precision_recall: detections reference images without ground truth");
    }
    struct Entry {
        double score;
        std::size_t image;
        const Box* box;
    };
    std::vector<Entry> entries;
    for (std::size_t i = 0; i < dets.size(); ++i) {
        for (const Detection& d : dets[i]) {
            if (d.category == category) entries.push_back({d.score, i, &d.box});
        }
    }
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });

    PrCurve curve;
    std::vector<std::vector<bool>> matched(gts.size());
    for (std::size_t i = 0; i < gts.size(); ++i) {
        matched[i].assign(gts[i].size(), false);
        for (const auto& g : gts[i]) {
            if (g.category == category) ++curve.num_gt;
        }
    }

    std::size_t tp = 0;
    std::size_t fp = 0;
    for (const Entry& e : entries) {
        const auto& objects = gts[e.image];
        double best = 0.0;
        std::ptrdiff_t best_idx = -1;
        for (std::size_t g = 0; g < objects.size(); ++g) {
            if (objects[g].category != category || matched[e.image][g]) continue;
            const double v = iou(*e.box, objects[g].box);
            if (v >= iou_threshold && (best_idx < 0 || v > best)) {
                best = v;
                best_idx = static_cast<std::ptrdiff_t>(g);
            }
        }
        if (best_idx >= 0) {
            matched[e.image][static_cast<std::size_t>(best_idx)] = true;
            ++tp;
        } else {
            ++fp;
        }
        curve.precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
        curve.recall.push_back(curve.num_gt ? static_cast<double>(tp) / static_cast<double>(curve.num_gt) : 0.0);
    }
    return curve;
}

double interpolated_ap(const PrCurve& curve) {
    if (curve.num_gt == 0) return curve.precision.empty() ? 1.0 : 0.0;
    std::vector<double> envelope = curve.precision;
    for (std::size_t i = envelope.size(); i-- > 1;) {
        envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
    }
    double sum = 0.0;
    for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        const auto it = std::lower_bound(curve.recall.begin(), curve.recall.end(), r);
        if (it != curve.recall.end()) {
            sum += envelope[static_cast<std::size_t>(it - curve.recall.begin())];
        }
    }
    return sum / 101.0;
}

double average_precision(const ImageDetections& dets, const GroundTruth& gts, int category,
                         double iou_threshold) {
    return interpolated_ap(precision_recall(dets, gts, category, iou_threshold));
}

ApReport evaluate_detections(const ImageDetections& dets, const GroundTruth& gts) {
    std::set<int> categories;
    for (const auto& img : gts) {
        for (const auto& g : img) categories.insert(g.category);
    }
    for (const auto& img : dets) {
        for (const auto& d : img) categories.insert(d.category);
    }
    ApReport report;
    if (categories.empty()) return report;
    for (int cat : categories) {
        ApReport::PerCategory pc;
        for (int k = 0; k < 10; ++k) {
            const double thr = 0.5 + 0.05 * k;
            const double ap = average_precision(dets, gts, cat, thr);
            pc.ap += ap;
            if (k == 0) pc.ap50 = ap;
            if (k == 5) pc.ap75 = ap;
        }
        pc.ap /= 10.0;
        report.per_category[cat] = pc;
        report.ap += pc.ap;
        report.ap50 += pc.ap50;
        report.ap75 += pc.ap75;
    }
    const double n = static_cast<double>(categories.size());
    report.ap /= n;
    report.ap50 /= n;
    report.ap75 /= n;
    return report;
}

double pair_accuracy(std::span<const RanTarget> predicted, std::span<const RanTarget> truth,
                     double threshold) {
    if (predicted.empty()) throw InvalidArgument("pair_accuracy: empty input");
    if (predicted.size() != truth.size()) throw InvalidArgument("pair_accuracy: length mismatch");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if ((predicted[i].c >= threshold) == (truth[i].c == 1.0)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

namespace {

IouStats stats_of(const std::vector<double>& v) {
    IouStats s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    s.max = *std::max_element(v.begin(), v.end());
    s.min = *std::min_element(v.begin(), v.end());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.variance = ss / static_cast<double>(v.size());
    return s;
}

}  // namespace

BucketReport bucket_analysis(std::span<const std::pair<double, double>> pairs) {
    static constexpr std::array<double, 6> kEdges{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
    BucketReport report;
    std::array<std::vector<double>, 5> before;
    std::array<std::vector<double>, 5> after;
    for (const auto& [b, a] : pairs) {
        if (!(b >= 0.0 && b <= 1.0) || !(a >= 0.0 && a <= 1.0)) {
            throw InvalidArgument("bucket_analysis: IoU outside [0,1]");
        }
        std::size_t k = 0;
        while (k < 4 && b >= kEdges[k + 1]) ++k;
        before[k].push_back(b);
        after[k].push_back(a);
    }
    for (std::size_t k = 0; k < 5; ++k) {
        IouBucket& bucket = report.buckets[k];
        bucket.lower = kEdges[k];
        bucket.upper = kEdges[k + 1];
        bucket.count = before[k].size();
        report.total += bucket.count;
        if (bucket.count == 0) continue;
        bucket.before = stats_of(before[k]);
        bucket.after = stats_of(after[k]);
        double inc = 0.0;
        for (std::size_t i = 0; i < bucket.count; ++i) inc += after[k][i] - before[k][i];
        bucket.mean_increment = inc / static_cast<double>(bucket.count);
    }
    return report;
}

}  // namespace fsdet
