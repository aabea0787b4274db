/**
 * @file nn.hpp
 * @brief Fixed-topology regression head: dense layers, rectifier and logistic
 *        activations, the RAN loss, Adam, and finite-difference checking.
 *
 * The head maps a fused 2L descriptor to the 5-channel RAN target through
 * widths 2L, L, L/2, L/4, 16, 5. Hidden layers use a rectifier, the output
 * layer a logistic on every channel. Everything is templated on the scalar
 * type so gradient checks can run the same code in double precision.
 */
#pragma once

#include "fsdet/ran_target.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fsdet {

/// Row-major float tensor.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape_, std::vector<float> data_);
    Tensor(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : shape{rows, cols}, data(rows * cols, fill) {}

    std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
    std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    float& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
};

namespace nn {

/// y = W x + b for every row; W is out x in, row-major.
template <typename T>
struct DenseLayer {
    int in_features = 0;
    int out_features = 0;
    std::vector<T> weight;
    std::vector<T> bias;
};

template <typename T>
struct DenseGrad {
    std::vector<T> weight;
    std::vector<T> bias;
};

template <typename T>
void dense_forward(const DenseLayer<T>& layer, std::span<const T> x, int batch, std::span<T> y);

/// Accumulates parameter gradients into `grad` and writes dL/dx into `dx`
/// (which may be empty to skip).
template <typename T>
void dense_backward(const DenseLayer<T>& layer, std::span<const T> x, std::span<const T> dy,
                    int batch, DenseGrad<T>& grad, std::span<T> dx);

template <typename T>
void relu_forward(std::span<const T> x, std::span<T> y);
template <typename T>
void relu_backward(std::span<const T> x, std::span<const T> dy, std::span<T> dx);

template <typename T>
void sigmoid_forward(std::span<const T> x, std::span<T> y);
/// Uses the forward output y: dx = dy * y * (1 - y).
template <typename T>
void sigmoid_backward(std::span<const T> y, std::span<const T> dy, std::span<T> dx);

/// Smooth-L1 transition point for the geometry channels.
inline constexpr double kSmoothL1Delta = 0.1;

struct LossValue {
    double total = 0.0;
    double classification = 0.0;
    double geometry = 0.0;
};

/**
 * Binary cross-entropy on channel c plus smooth-L1 on dx, dy, sw, sh for
 * samples with c = 1, both averaged over the batch. `pred` is batch x 5 in
 * (0,1). When `dpred` is non-empty it receives dLoss/dpred.
 */
template <typename T>
LossValue ran_loss(std::span<const T> pred, std::span<const RanTarget> targets, std::span<T> dpred);

}  // namespace nn

template <typename T>
class BasicMlpHead {
public:
    BasicMlpHead() = default;

    /// Glorot-uniform weights, zero biases, deterministic in `seed`.
    static BasicMlpHead initialized(int embedding_length, std::uint64_t seed);
    /// Every parameter zero; every output is 0.5.
    static BasicMlpHead zeros(int embedding_length);

    /// Layer widths 2L, L, L/2, L/4, 16, 5.
    static std::vector<int> widths(int embedding_length);

    int embedding_length() const { return embedding_length_; }
    int input_width() const { return 2 * embedding_length_; }
    std::vector<nn::DenseLayer<T>>& layers() { return layers_; }
    const std::vector<nn::DenseLayer<T>>& layers() const { return layers_; }
    std::size_t parameter_count() const;

    template <typename U>
    BasicMlpHead<U> cast() const;

    bool operator==(const BasicMlpHead&) const;

private:
    int embedding_length_ = 0;
    std::vector<nn::DenseLayer<T>> layers_;

    template <typename>
    friend class BasicMlpHead;
};

using MlpHead = BasicMlpHead<float>;

/// Intermediate activations kept for backpropagation.
template <typename T>
struct ForwardCache {
    std::vector<std::vector<T>> inputs;       // input to each dense layer
    std::vector<std::vector<T>> pre;          // dense output before activation
    std::vector<T> output;                    // batch x 5 logistic output
};

template <typename T>
using HeadGradients = std::vector<nn::DenseGrad<T>>;

/// Raw forward pass over `batch` rows of width 2L.
template <typename T>
std::vector<T> forward_rows(const BasicMlpHead<T>& head, std::span<const T> x, int batch,
                            ForwardCache<T>* cache = nullptr);

/// Backpropagates dLoss/doutput through the cached pass.
template <typename T>
HeadGradients<T> backward(const BasicMlpHead<T>& head, const ForwardCache<T>& cache,
                          std::span<const T> doutput, int batch);

/// Forward pass on a [batch, 2L] tensor; throws InvalidArgument on shape mismatch.
Tensor forward(const MlpHead& head, const Tensor& x);

struct Batch {
    Tensor inputs;                   // [batch, 2L]
    std::vector<RanTarget> targets;  // batch entries
};

/// Loss value plus analytic parameter gradients for one batch.
template <typename T>
std::pair<nn::LossValue, HeadGradients<T>> loss_and_gradients(const BasicMlpHead<T>& head,
                                                              const Batch& batch);

/// Central-difference gradients (double precision) with the given step.
HeadGradients<double> numeric_gradients(const BasicMlpHead<double>& head, const Batch& batch,
                                        double step = 1e-3);

/// max |a - n| / max(|a|, |n|, floor) over all parameters.
double max_relative_error(const HeadGradients<double>& analytic,
                          const HeadGradients<double>& numeric, double floor = 1e-3);

/// Analytic vs central-difference gradient comparison in double precision.
double grad_check(const MlpHead& head, const Batch& batch, double step = 1e-3);

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 64;
    int epochs = 30;
    std::uint64_t seed = 0;
    /// Cosine-anneals the per-epoch learning rate down to learning_rate *
    /// final_lr_scale; 1 keeps it constant.
    double final_lr_scale = 1.0;

    void validate() const;

    /// Learning rate used during `epoch`.
    double epoch_learning_rate(int epoch) const;
};

/// Adam moment estimates matching one head's parameter layout.
class AdamOptimizer {
public:
    explicit AdamOptimizer(const MlpHead& head);
    void apply(MlpHead& head, const HeadGradients<float>& grads, const TrainConfig& cfg);
    long long steps() const { return steps_; }

private:
    HeadGradients<double> m_;
    HeadGradients<double> v_;
    long long steps_ = 0;
};

/// One optimizer step on `batch`. Returns the pre-update loss; throws
/// NumericError if it is not finite.
nn::LossValue train_step(MlpHead& head, AdamOptimizer& opt, const Batch& batch,
                         const TrainConfig& cfg);

/// RAN1 binary checkpoint: "RAN1", u32 L, u32 layer count, then per layer
/// row-major little-endian float32 weights followed by the bias.
void save_checkpoint(const std::filesystem::path& path, const MlpHead& head);
MlpHead load_checkpoint(const std::filesystem::path& path);

}  // namespace fsdet
