#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "armmeter/tensor_io.hpp"

namespace armmeter {

enum class LayerType { conv2d, dense, global_average_pool };

std::string to_string(LayerType t);
LayerType layer_type_from_string(const std::string& s);

struct LayerSpec {
    LayerType type = LayerType::dense;
    // conv2d: output filter count. dense: output unit count. Ignored for pooling.
    int units = 0;
};

struct InputDims {
    int channels = 0;
    int height = 0;
    int width = 0;
    int size() const { return channels * height * width; }
};

// Architecture plus the seed its initial weights are drawn from. The final
// layer must be a dense layer; it produces the class logits and gets no
// activation function. All other conv2d/dense layers are followed by ReLU.
struct ModelSpec {
    std::string model_id;
    InputDims input;
    std::vector<LayerSpec> layers;
    std::uint64_t seed = 0;
};

// Shape of the value flowing between layers: a (c,h,w) stack of planes while
// spatial, a flat feature vector after pooling or a dense layer.
struct TensorShape {
    int c = 0;
    int h = 0;
    int w = 0;
    bool spatial = false;
    int size() const { return spatial ? c * h * w : c; }
};

// Checks layer ordering/shapes and returns the output shape of each layer.
// Throws std::invalid_argument on a malformed spec.
std::vector<TensorShape> validate_model_spec(const ModelSpec& spec);

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    double target_accuracy = 0.9;
    int max_epochs = 100;
    std::uint64_t seed = 0;
};

struct RetrainingReport {
    int epochs_used = 0;
    bool reached_target = false;
    // accuracy_curve[0] is the holdout accuracy before any update; entry e is
    // the accuracy after epoch e. loss_curve[e-1] is the mean training loss
    // of epoch e.
    std::vector<double> accuracy_curve;
    std::vector<double> loss_curve;
    double wall_seconds = 0.0;
};

// Feed-forward network with one flat parameter vector. T is the arithmetic
// type: float for ordinary use, double for finite-difference checks.
template <typename T>
class Network {
public:
    explicit Network(const ModelSpec& spec);  // all parameters zero

    const ModelSpec& spec() const { return spec_; }
    std::size_t parameter_count() const { return params_.size(); }
    std::vector<T>& parameters() { return params_; }
    const std::vector<T>& parameters() const { return params_; }

    std::vector<float> parameters_f32() const;
    void set_parameters_f32(std::span<const float> values);

    // Draws He-uniform weights (zero biases) from spec().seed. The draw
    // sequence is computed in float so every instantiation of T starts from
    // bit-identical values.
    void init_parameters();

    // Scratch buffers for one sample's forward/backward pass.
    struct Workspace {
        std::vector<std::vector<T>> acts;  // acts[0] = input, acts[l+1] = layer l output
    };
    Workspace make_workspace() const;

    // Runs one sample; returns the logits (a view into ws).
    std::span<const T> forward(const Image& img, Workspace& ws) const;

    int predict(const Image& img, Workspace& ws) const;
    // Fraction of correctly classified samples; `indices` selects a subset
    // (empty = whole dataset).
    double accuracy(const Dataset& ds, std::span<const std::size_t> indices = {}) const;

    struct CaptureResult {
        std::vector<int> predictions;
        ActivationTrace trace;
    };
    // Forward pass over a dataset recording, for every hidden ReLU layer, the
    // spatial mean per filter (conv) or the unit value (dense) of each sample,
    // plus the argmax prediction per sample. Weights are untouched.
    CaptureResult forward_with_capture(const Dataset& ds) const;
    std::vector<std::string> captured_layer_names() const;

    // Mean softmax cross-entropy over the index batch. The gradient variant
    // accumulates d(mean loss)/d(params) into `grads` (resized and zeroed).
    double batch_loss(const Dataset& ds, std::span<const std::size_t> idx, Workspace& ws) const;
    double batch_loss_and_grads(const Dataset& ds, std::span<const std::size_t> idx,
                                std::vector<T>& grads, Workspace& ws, Workspace& bw) const;

    // Minibatch SGD until a 10% holdout split reaches cfg.target_accuracy or
    // cfg.max_epochs elapses. Epoch shuffles and the split are derived from
    // cfg.seed, so training is a pure function of (params, dataset, config).
    RetrainingReport train_to_accuracy(const Dataset& ds, const TrainConfig& cfg);

    template <typename U>
    Network<U> cast() const {
        Network<U> other(spec_);
        for (std::size_t i = 0; i < params_.size(); ++i)
            other.parameters()[i] = static_cast<U>(params_[i]);
        return other;
    }

private:
    struct LayerPlan {
        LayerType type;
        std::string name;
        bool relu = false;
        bool captured = false;
        TensorShape in;
        TensorShape out;
        std::size_t weight_offset = 0;
        std::size_t weight_count = 0;
        std::size_t bias_offset = 0;
        std::size_t bias_count = 0;
    };

    void forward_into(const Image& img, Workspace& ws) const;
    void backward_from_logit_grads(Workspace& ws, Workspace& bw, std::vector<T>& grads) const;

    ModelSpec spec_;
    std::vector<LayerPlan> plan_;
    std::vector<T> params_;
};

using Model = Network<float>;

Model init_model(const ModelSpec& spec);

// Compares analytic gradients against central finite differences (double
// precision, h = 1e-4) over the given batch; returns the max relative error.
double gradient_check(const Model& model, const Dataset& batch,
                      std::span<const std::size_t> idx = {});

// Flat weight vectors on disk ("ARMW" container).
void write_weights(const std::vector<float>& weights, const std::filesystem::path& path);
std::vector<float> read_weights(const std::filesystem::path& path);

// The built-in reference architectures, instantiated for a given input size.
bool is_builtin_model(const std::string& model_id);
std::vector<std::string> builtin_model_ids();
ModelSpec builtin_model_spec(const std::string& model_id, InputDims input,
                             std::uint32_t class_count, std::uint64_t seed);

extern template class Network<float>;
extern template class Network<double>;

}  // namespace armmeter
