#include "fsdet/nn.hpp"

#include "fsdet/error.hpp"
#include "simd.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>

namespace fsdet {

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<float> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
    const std::size_t n =
        std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    if (n != data.size()) throw InvalidArgument("Tensor: data length does not match shape");
}

namespace nn {
namespace {

// Dot product over eight interleaved partial sums so it vectorizes without
// relaxed floating-point flags; the summation order is fixed.
template <typename T>
inline T dot_lanes(const T* a, const T* b, int n) {
    T lanes[8] = {};
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int k = 0; k < 8; ++k) lanes[k] += a[i + k] * b[i + k];
    }
    T s = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

FSDET_HOT float dot(const float* a, const float* b, int n) { return dot_lanes(a, b, n); }
FSDET_HOT double dot(const double* a, const double* b, int n) { return dot_lanes(a, b, n); }

}  // namespace

template <typename T>
void dense_forward(const DenseLayer<T>& layer, std::span<const T> x, int batch, std::span<T> y) {
    const int in = layer.in_features;
    const int out = layer.out_features;
    for (int b = 0; b < batch; ++b) {
        const T* xr = x.data() + static_cast<std::size_t>(b) * in;
        T* yr = y.data() + static_cast<std::size_t>(b) * out;
        for (int o = 0; o < out; ++o) {
            const T* w = layer.weight.data() + static_cast<std::size_t>(o) * in;
            yr[o] = layer.bias[o] + dot(w, xr, in);
        }
    }
}

template <typename T>
void dense_backward(const DenseLayer<T>& layer, std::span<const T> x, std::span<const T> dy,
                    int batch, DenseGrad<T>& grad, std::span<T> dx) {
    const int in = layer.in_features;
    const int out = layer.out_features;
    grad.weight.resize(layer.weight.size(), T{0});
    grad.bias.resize(layer.bias.size(), T{0});
    if (!dx.empty()) std::fill(dx.begin(), dx.end(), T{0});
    for (int b = 0; b < batch; ++b) {
        const T* xr = x.data() + static_cast<std::size_t>(b) * in;
        const T* dyr = dy.data() + static_cast<std::size_t>(b) * out;
        T* dxr = dx.empty() ? nullptr : dx.data() + static_cast<std::size_t>(b) * in;
        for (int o = 0; o < out; ++o) {
            const T g = dyr[o];
            if (g == T{0}) continue;
            grad.bias[o] += g;
            T* gw = grad.weight.data() + static_cast<std::size_t>(o) * in;
            const T* w = layer.weight.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) gw[i] += g * xr[i];
            if (dxr) {
                for (int i = 0; i < in; ++i) dxr[i] += g * w[i];
            }
        }
    }
}

template <typename T>
void relu_forward(std::span<const T> x, std::span<T> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
}

template <typename T>
void relu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx) {
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > T{0} ? dy[i] : T{0};
}

template <typename T>
void sigmoid_forward(std::span<const T> x, std::span<T> y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] >= T{0}) {
            y[i] = T{1} / (T{1} + std::exp(-x[i]));
        } else {
            const T e = std::exp(x[i]);
            y[i] = e / (T{1} + e);
        }
    }
}

template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx) {
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = dy[i] * y[i] * (T{1} - y[i]);
}

template <typename T>
LossValue ran_loss(std::span<const T> pred, std::span<const RanTarget> targets, std::span<T> dpred) {
    const std::size_t batch = targets.size();
    if (pred.size() != batch * 5) throw InvalidArgument("ran_loss: prediction/target size mismatch");
    // Clamp keeps log() finite once the logistic saturates in float.
    const double clamp_eps = std::is_same_v<T, float> ? 1e-7 : 1e-15;
    const double inv_batch = batch ? 1.0 / static_cast<double>(batch) : 0.0;
    LossValue lv;
    if (!dpred.empty()) std::fill(dpred.begin(), dpred.end(), T{0});
    for (std::size_t b = 0; b < batch; ++b) {
        const auto t = targets[b].as_array();
        const double p = std::clamp(static_cast<double>(pred[b * 5]), clamp_eps, 1.0 - clamp_eps);
        const double c = t[0];
        lv.classification -= c * std::log(p) + (1.0 - c) * std::log(1.0 - p);
        if (!dpred.empty()) dpred[b * 5] = static_cast<T>((p - c) / (p * (1.0 - p)) * inv_batch);
        if (c < 0.5) continue;
        for (int k = 1; k < 5; ++k) {
            const double r = static_cast<double>(pred[b * 5 + k]) - t[k];
            const double a = std::abs(r);
            if (a < kSmoothL1Delta) {
                lv.geometry += 0.5 * r * r / kSmoothL1Delta;
                if (!dpred.empty()) dpred[b * 5 + k] = static_cast<T>(r / kSmoothL1Delta * inv_batch);
            } else {
                lv.geometry += a - 0.5 * kSmoothL1Delta;
                if (!dpred.empty()) dpred[b * 5 + k] = static_cast<T>((r > 0 ? 1.0 : -1.0) * inv_batch);
            }
        }
    }
    lv.classification *= inv_batch;
    lv.geometry *= inv_batch;
    lv.total = lv.classification + lv.geometry;
    return lv;
}

#define FSDET_NN_INSTANTIATE(T)                                                                  \
    template void dense_forward<T>(const DenseLayer<T>&, std::span<const T>, int, std::span<T>); \
    template void dense_backward<T>(const DenseLayer<T>&, std::span<const T>,                   \
                                    std::span<const T>, int, DenseGrad<T>&, std::span<T>);      \
    template void relu_forward<T>(std::span<const T>, std::span<T>);                             \
    template void relu_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);        \
    template void sigmoid_forward<T>(std::span<const T>, std::span<T>);                          \
    template void sigmoid_backward<T>(std::span<const T>, std::span<const T>, std::span<T>);     \
    template LossValue ran_loss<T>(std::span<const T>, std::span<const RanTarget>, std::span<T>);

FSDET_NN_INSTANTIATE(float)
FSDET_NN_INSTANTIATE(double)
#undef FSDET_NN_INSTANTIATE

}  // namespace nn

namespace {

// Portable [0,1) double from a 64-bit engine.
double unit_uniform(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void check_embedding_length(int embedding_length) {
    if (embedding_length < 4 || embedding_length % 4 != 0) {
        throw InvalidArgument("MlpHead: embedding length must be a positive multiple of 4");
    }
}

}  // namespace

template <typename T>
std::vector<int> BasicMlpHead<T>::widths(int embedding_length) {
    check_embedding_length(embedding_length);
    const int l = embedding_length;
    return {2 * l, l, l / 2, l / 4, 16, 5};
}

template <typename T>
BasicMlpHead<T> BasicMlpHead<T>::zeros(int embedding_length) {
    const auto w = widths(embedding_length);
    BasicMlpHead head;
    head.embedding_length_ = embedding_length;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        nn::DenseLayer<T> layer;
        layer.in_features = w[i];
        layer.out_features = w[i + 1];
        layer.weight.assign(static_cast<std::size_t>(w[i]) * w[i + 1], T{0});
        layer.bias.assign(w[i + 1], T{0});
        head.layers_.push_back(std::move(layer));
    }
    return head;
}

template <typename T>
BasicMlpHead<T> BasicMlpHead<T>::initialized(int embedding_length, std::uint64_t seed) {
    BasicMlpHead head = zeros(embedding_length);
    std::mt19937_64 rng(seed);
    for (auto& layer : head.layers_) {
        const double limit = std::sqrt(6.0 / (layer.in_features + layer.out_features));
        for (T& w : layer.weight) w = static_cast<T>((2.0 * unit_uniform(rng) - 1.0) * limit);
    }
    return head;
}

template <typename T>
std::size_t BasicMlpHead<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
}

template <typename T>
template <typename U>
BasicMlpHead<U> BasicMlpHead<T>::cast() const {
    BasicMlpHead<U> out;
    out.embedding_length_ = embedding_length_;
    for (const auto& l : layers_) {
        nn::DenseLayer<U> c;
        c.in_features = l.in_features;
        c.out_features = l.out_features;
        c.weight.assign(l.weight.begin(), l.weight.end());
        c.bias.assign(l.bias.begin(), l.bias.end());
        out.layers_.push_back(std::move(c));
    }
    return out;
}

template <typename T>
bool BasicMlpHead<T>::operator==(const BasicMlpHead& other) const {
    if (embedding_length_ != other.embedding_length_ || layers_.size() != other.layers_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].weight != other.layers_[i].weight || layers_[i].bias != other.layers_[i].bias) {
            return false;
        }
    }
    return true;
}

template class BasicMlpHead<float>;
template class BasicMlpHead<double>;
template BasicMlpHead<double> BasicMlpHead<float>::cast<double>() const;
template BasicMlpHead<float> BasicMlpHead<double>::cast<float>() const;

template <typename T>
std::vector<T> forward_rows(const BasicMlpHead<T>& head, std::span<const T> x, int batch,
                            ForwardCache<T>* cache) {
    const auto& layers = head.layers();
    if (x.size() != static_cast<std::size_t>(batch) * head.input_width()) {
        throw InvalidArgument("forward: input width must be 2L = " + std::to_string(head.input_width()));
    }
    std::vector<T> act(x.begin(), x.end());
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    for (std::size_t li = 0; li < layers.size(); ++li) {
        const auto& layer = layers[li];
        std::vector<T> pre(static_cast<std::size_t>(batch) * layer.out_features);
        nn::dense_forward<T>(layer, act, batch, pre);
        std::vector<T> post(pre.size());
        if (li + 1 == layers.size()) {
            nn::sigmoid_forward<T>(pre, post);
        } else {
            nn::relu_forward<T>(pre, post);
        }
        if (cache) {
            cache->inputs.push_back(std::move(act));
            cache->pre.push_back(std::move(pre));
        }
        act = std::move(post);
    }
    if (cache) cache->output = act;
    return act;
}

template <typename T>
HeadGradients<T> backward(const BasicMlpHead<T>& head, const ForwardCache<T>& cache,
                          std::span<const T> doutput, int batch) {
    const auto& layers = head.layers();
    HeadGradients<T> grads(layers.size());
    std::vector<T> upstream(doutput.begin(), doutput.end());
    for (std::size_t li = layers.size(); li-- > 0;) {
        const auto& layer = layers[li];
        std::vector<T> dpre(upstream.size());
        if (li + 1 == layers.size()) {
            nn::sigmoid_backward<T>(cache.output, upstream, dpre);
        } else {
            nn::relu_backward<T>(cache.pre[li], upstream, dpre);
        }
        std::vector<T> dx(li == 0 ? 0 : static_cast<std::size_t>(batch) * layer.in_features);
        nn::dense_backward<T>(layer, cache.inputs[li], dpre, batch, grads[li], dx);
        upstream = std::move(dx);
    }
    return grads;
}

template std::vector<float> forward_rows<float>(const BasicMlpHead<float>&, std::span<const float>,
                                                int, ForwardCache<float>*);
template std::vector<double> forward_rows<double>(const BasicMlpHead<double>&,
                                                  std::span<const double>, int, ForwardCache<double>*);
template HeadGradients<float> backward<float>(const BasicMlpHead<float>&, const ForwardCache<float>&,
                                              std::span<const float>, int);
template HeadGradients<double> backward<double>(const BasicMlpHead<double>&,
                                                const ForwardCache<double>&, std::span<const double>,
                                                int);

Tensor forward(const MlpHead& head, const Tensor& x) {
    if (x.shape.size() != 2 || x.cols() != static_cast<std::size_t>(head.input_width())) {
        throw InvalidArgument("forward: expected [batch, " + std::to_string(head.input_width()) + "] input");
    }
    const int batch = static_cast<int>(x.rows());
    return Tensor({x.rows(), 5}, forward_rows<float>(head, x.data, batch));
}

template <typename T>
std::pair<nn::LossValue, HeadGradients<T>> loss_and_gradients(const BasicMlpHead<T>& head,
                                                              const Batch& batch) {
    const int rows = static_cast<int>(batch.targets.size());
    if (batch.inputs.rows() != batch.targets.size()) {
        throw InvalidArgument("batch: input rows and targets differ");
    }
    std::vector<T> x(batch.inputs.data.begin(), batch.inputs.data.end());
    ForwardCache<T> cache;
    const std::vector<T> out = forward_rows<T>(head, x, rows, &cache);
    std::vector<T> dout(out.size());
    const nn::LossValue lv = nn::ran_loss<T>(out, batch.targets, dout);
    return {lv, backward<T>(head, cache, dout, rows)};
}

template std::pair<nn::LossValue, HeadGradients<float>> loss_and_gradients<float>(
    const BasicMlpHead<float>&, const Batch&);
template std::pair<nn::LossValue, HeadGradients<double>> loss_and_gradients<double>(
    const BasicMlpHead<double>&, const Batch&);

namespace {

double batch_loss(const BasicMlpHead<double>& head, const Batch& batch) {
    std::vector<double> x(batch.inputs.data.begin(), batch.inputs.data.end());
    const auto out = forward_rows<double>(head, x, static_cast<int>(batch.targets.size()));
    return nn::ran_loss<double>(out, batch.targets, {}).total;
}

}  // namespace

HeadGradients<double> numeric_gradients(const BasicMlpHead<double>& head, const Batch& batch,
                                        double step) {
    BasicMlpHead<double> probe = head;
    HeadGradients<double> grads(head.layers().size());
    auto central = [&](double& param) {
        const double saved = param;
        param = saved + step;
        const double up = batch_loss(probe, batch);
        param = saved - step;
        const double down = batch_loss(probe, batch);
        param = saved;
        return (up - down) / (2.0 * step);
    };
    for (std::size_t li = 0; li < probe.layers().size(); ++li) {
        auto& layer = probe.layers()[li];
        grads[li].weight.resize(layer.weight.size());
        grads[li].bias.resize(layer.bias.size());
        for (std::size_t i = 0; i < layer.weight.size(); ++i) grads[li].weight[i] = central(layer.weight[i]);
        for (std::size_t i = 0; i < layer.bias.size(); ++i) grads[li].bias[i] = central(layer.bias[i]);
    }
    return grads;
}

double max_relative_error(const HeadGradients<double>& analytic, const HeadGradients<double>& numeric,
                          double floor) {
    if (analytic.size() != numeric.size()) throw InvalidArgument("gradient layouts differ");
    double worst = 0.0;
    auto cmp = [&](const std::vector<double>& a, const std::vector<double>& n) {
        if (a.size() != n.size()) throw InvalidArgument("gradient layouts differ");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
            worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
        }
    };
    for (std::size_t li = 0; li < analytic.size(); ++li) {
        cmp(analytic[li].weight, numeric[li].weight);
        cmp(analytic[li].bias, numeric[li].bias);
    }
    return worst;
}

double grad_check(const MlpHead& head, const Batch& batch, double step) {
    const BasicMlpHead<double> wide = head.cast<double>();
    const auto analytic = loss_and_gradients<double>(wide, batch).second;
    return max_relative_error(analytic, numeric_gradients(wide, batch, step));
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("TrainConfig: learning rate must be finite and non-negative");
    }
    if (batch_size <= 0) throw InvalidArgument("TrainConfig: batch size must be positive");
    if (epochs < 0) throw InvalidArgument("TrainConfig: negative epoch count");
    if (!(final_lr_scale > 0.0 && final_lr_scale <= 1.0)) {
        throw InvalidArgument("TrainConfig: final_lr_scale must lie in (0,1]");
    }
}

double TrainConfig::epoch_learning_rate(int epoch) const {
    if (final_lr_scale == 1.0 || epochs <= 1) return learning_rate;
    const double progress = static_cast<double>(epoch) / (epochs - 1);
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    return learning_rate * (final_lr_scale + (1.0 - final_lr_scale) * cosine);
}

AdamOptimizer::AdamOptimizer(const MlpHead& head) {
    for (const auto& l : head.layers()) {
        m_.push_back({std::vector<double>(l.weight.size()), std::vector<double>(l.bias.size())});
        v_.push_back({std::vector<double>(l.weight.size()), std::vector<double>(l.bias.size())});
    }
}

void AdamOptimizer::apply(MlpHead& head, const HeadGradients<float>& grads, const TrainConfig& cfg) {
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps_));
    auto update = [&](std::vector<float>& p, const std::vector<float>& g, std::vector<double>& m,
                      std::vector<double>& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double step = cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
            p[i] = static_cast<float>(p[i] - step);
        }
    };
    for (std::size_t li = 0; li < head.layers().size(); ++li) {
        auto& layer = head.layers()[li];
        update(layer.weight, grads[li].weight, m_[li].weight, v_[li].weight);
        update(layer.bias, grads[li].bias, m_[li].bias, v_[li].bias);
    }
}

nn::LossValue train_step(MlpHead& head, AdamOptimizer& opt, const Batch& batch, const TrainConfig& cfg) {
    cfg.validate();
    auto [lv, grads] = loss_and_gradients<float>(head, batch);
    if (!std::isfinite(lv.total)) {
        throw NumericError("train_step: non-finite loss (classification=" +
                           std::to_string(lv.classification) + ", geometry=" +
                           std::to_string(lv.geometry) + ")");
    }
    opt.apply(head, grads, cfg);
    return lv;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff),
                                static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(std::istream& in) {
    std::array<unsigned char, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw IoError("checkpoint truncated");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const MlpHead& head) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("RAN1", 4);
    put_u32(out, static_cast<std::uint32_t>(head.embedding_length()));
    put_u32(out, static_cast<std::uint32_t>(head.layers().size()));
    for (const auto& layer : head.layers()) {
        for (float w : layer.weight) put_u32(out, std::bit_cast<std::uint32_t>(w));
        for (float b : layer.bias) put_u32(out, std::bit_cast<std::uint32_t>(b));
    }
    if (!out) throw IoError("write failed for " + path.string());
}

MlpHead load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 4> magic{};
    in.read(magic.data(), 4);
    if (!in || std::string(magic.data(), 4) != "RAN1") throw IoError("not a RAN1 checkpoint: " + path.string());
    const auto l = static_cast<int>(get_u32(in));
    const auto count = get_u32(in);
    MlpHead head;
    try {
        head = MlpHead::zeros(l);
    } catch (const InvalidArgument& e) {
        throw IoError(std::string("checkpoint header: ") + e.what());
    }
    if (count != head.layers().size()) throw IoError("checkpoint layer count mismatch");
    for (auto& layer : head.layers()) {
        for (float& w : layer.weight) w = std::bit_cast<float>(get_u32(in));
        for (float& b : layer.bias) b = std::bit_cast<float>(get_u32(in));
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in checkpoint");
    return head;
}

}  // namespace fsdet
