#include "fsdet/pipeline.hpp"

#include "fsdet/error.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace fsdet {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

}  // namespace

void SupportSet::validate() const {
    if (exemplars.empty()) throw InvalidArgument("support set has no exemplars");
    for (const auto& e : exemplars) {
        if (e.category != category) throw InvalidArgument("support set mixes categories");
        if (e.patch.empty() || !e.source_box.valid()) throw InvalidArgument("invalid exemplar");
    }
}

void PipelineConfig::validate() const {
    sdm.validate();
    proposals.validate();
    purify.validate();
    ran.validate();
    if (!(nms_iou >= 0.0 && nms_iou <= 1.0)) throw InvalidArgument("nms_iou outside [0,1]");
}

DetectResult detect(const Image& query, const SupportSet& support, const MlpHead* head,
                    const PipelineConfig& cfg, const std::vector<Box>* external) {
    cfg.validate();
    support.validate();
    if (cfg.ran_on) {
        if (!head) throw InvalidArgument("detect: RAN enabled but no head given");
        if (head->embedding_length() != cfg.ran.embedding_length) {
            throw CompatibilityError("detect: head L differs from configured L");
        }
    }
    const auto start = Clock::now();
    DetectResult r;
    const Image gray = to_gray(query);

    auto t = Clock::now();
    r.sdm = compute_sdm(gray, support.exemplars, cfg.sdm);
    r.timings.sdm_ms = elapsed_ms(t);

    t = Clock::now();
    if (!external) r.peaks = extract_peaks(r.sdm, cfg.sdm);
    r.timings.peaks_ms = elapsed_ms(t);

    t = Clock::now();
    if (external) {
        r.proposals = *external;
    } else {
        Box mean_box{0.0, 0.0, 0.0, 0.0};
        for (const auto& e : support.exemplars) {
            mean_box.w += e.source_box.w;
            mean_box.h += e.source_box.h;
        }
        mean_box.w /= static_cast<double>(support.exemplars.size());
        mean_box.h /= static_cast<double>(support.exemplars.size());
        r.proposals = anchor_proposals(r.peaks, mean_box, gray.width(), gray.height(), cfg.proposals);
    }
    r.timings.proposals_ms = elapsed_ms(t);

    t = Clock::now();
    const IntegralImage ii(r.sdm);
    std::vector<double> ratios;
    for (const Box& b : r.proposals) {
        const double ratio = purification_ratio(ii, b);
        if (ratio < 0.0) continue;
        if (cfg.purify_on && ratio < cfg.purify.h) continue;
        r.candidates.push_back(b);
        ratios.push_back(ratio);
    }
    r.timings.purify_ms = elapsed_ms(t);

    t = Clock::now();
    std::vector<Detection> pre_nms;
    std::vector<std::size_t> pre_sources;
    if (cfg.ran_on) {
        // Output probabilities are taken from the float logits in double, so
        // that confident candidates keep distinct scores instead of all
        // rounding to c = 1.
        const std::size_t l = static_cast<std::size_t>(cfg.ran.embedding_length);
        const std::size_t n = r.candidates.size();
        const std::size_t k = support.exemplars.size();
        std::vector<float> fused(n * k * 2 * l);
        for (std::size_t s = 0; s < k; ++s) {
            const Descriptor shot = describe(support.exemplars[s].patch, cfg.ran);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(shot.begin(), shot.end(), fused.begin() + static_cast<std::ptrdiff_t>((i * k + s) * 2 * l));
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            const Descriptor cand = describe_region(gray, r.candidates[i], cfg.ran);
            for (std::size_t s = 0; s < k; ++s) {
                std::copy(cand.begin(), cand.end(), fused.begin() + static_cast<std::ptrdiff_t>((i * k + s) * 2 * l + l));
            }
        }
        ForwardCache<float> cache;
        forward_rows<float>(*head, fused, static_cast<int>(n * k), &cache);
        std::vector<double> out(cache.pre.back().size());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = 1.0 / (1.0 + std::exp(-static_cast<double>(cache.pre.back()[j])));
        for (std::size_t i = 0; i < n; ++i) {
            double score = 0.0;
            const double* best = nullptr;
            for (std::size_t s = 0; s < k; ++s) {
                const double* p = out.data() + (i * k + s) * 5;
                score += p[0];
                if (!best || p[0] > best[0]) best = p;
            }
            score /= static_cast<double>(k);
            if (score < cfg.ran.classify_threshold) continue;
            const RanTarget t{best[0], best[1], best[2], best[3], best[4]};
            pre_nms.push_back(Detection{decode(r.candidates[i], t, cfg.ran), support.category, score});
            pre_sources.push_back(i);
        }
    } else {
        for (std::size_t i = 0; i < r.candidates.size(); ++i) {
            pre_nms.push_back(Detection{r.candidates[i], support.category, ratios[i]});
            pre_sources.push_back(i);
        }
    }
    r.timings.ran_ms = elapsed_ms(t);

    t = Clock::now();
    for (std::size_t k : nms_indices(pre_nms, cfg.nms_iou)) {
        r.detections.push_back(pre_nms[k]);
        r.sources.push_back(pre_sources[k]);
    }
    r.timings.nms_ms = elapsed_ms(t);
    r.timings.total_ms = elapsed_ms(start);
    return r;
}

std::vector<DetectResult> detect_batch(std::span<const Image> queries, const SupportSet& support,
                                       const MlpHead* head, const PipelineConfig& cfg, int threads) {
    std::vector<DetectResult> out(queries.size());
    if (threads <= 1 || queries.size() <= 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) out[i] = detect(queries[i], support, head, cfg);
        return out;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(threads), queries.size());
    for (std::size_t w = 0; w < n; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < queries.size(); i = next++) {
                try {
                    out[i] = detect(queries[i], support, head, cfg);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
    return out;
}

}  // namespace fsdet
