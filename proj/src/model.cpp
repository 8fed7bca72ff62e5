#include "armmeter/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "armmeter/activation_stats.hpp"
#include "armmeter/detail/wire.hpp"
#include "armmeter/rng.hpp"

namespace armmeter {

namespace {

constexpr char kWeightsMagic[4] = {'A', 'R', 'M', 'W'};
constexpr std::uint16_t kWeightsVersion = 1;

// Weight init draws from its own stream so it never collides with the
// holdout-split or per-epoch shuffle streams used during training.
constexpr std::uint64_t kInitStream = 0x57A57A11C0DEULL;

}  // namespace

std::string to_string(LayerType t) {
    switch (t) {
        case LayerType::conv2d: return "conv2d";
        case LayerType::dense: return "dense";
        case LayerType::global_average_pool: return "global_average_pool";
    }
    throw std::invalid_argument("unknown layer type");
}

LayerType layer_type_from_string(const std::string& s) {
    if (s == "conv2d") return LayerType::conv2d;
    if (s == "dense") return LayerType::dense;
    if (s == "global_average_pool") return LayerType::global_average_pool;
    throw std::invalid_argument("unknown layer type: " + s);
}

std::vector<TensorShape> validate_model_spec(const ModelSpec& spec) {
    if (spec.input.channels < 1 || spec.input.height < 1 || spec.input.width < 1)
        throw std::invalid_argument("model input dimensions must be positive");
    if (spec.layers.empty()) throw std::invalid_argument("model needs at least one layer");
    if (spec.layers.back().type != LayerType::dense)
        throw std::invalid_argument("final layer must be a dense logits layer");

    std::vector<TensorShape> shapes;
    TensorShape cur{spec.input.channels, spec.input.height, spec.input.width, true};
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& layer = spec.layers[i];
        switch (layer.type) {
            case LayerType::conv2d:
                if (!cur.spatial)
                    throw std::invalid_argument("conv2d layer requires spatial input");
                if (layer.units < 1)
                    throw std::invalid_argument("conv2d layer needs at least one filter");
                cur = TensorShape{layer.units, cur.h, cur.w, true};
                break;
            case LayerType::dense:
                if (layer.units < 1)
                    throw std::invalid_argument("dense layer needs at least one unit");
                cur = TensorShape{layer.units, 0, 0, false};
                break;
            case LayerType::global_average_pool:
                if (!cur.spatial)
                    throw std::invalid_argument("global_average_pool requires spatial input");
                cur = TensorShape{cur.c, 0, 0, false};
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

template <typename T>
Network<T>::Network(const ModelSpec& spec) : spec_(spec) {
    std::vector<TensorShape> shapes = validate_model_spec(spec);
    TensorShape in{spec.input.channels, spec.input.height, spec.input.width, true};
    std::size_t offset = 0;
    int conv_no = 0, dense_no = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const bool last = (i + 1 == spec.layers.size());
        LayerPlan p;
        p.type = spec.layers[i].type;
        p.in = in;
        p.out = shapes[i];
        switch (p.type) {
            case LayerType::conv2d:
                p.name = "conv" + std::to_string(++conv_no);
                p.relu = true;
                p.captured = true;
                p.weight_count = static_cast<std::size_t>(p.out.c) * p.in.c * 9;
                p.bias_count = static_cast<std::size_t>(p.out.c);
                break;
            case LayerType::dense:
                p.name = last ? "logits" : "dense" + std::to_string(++dense_no);
                p.relu = !last;
                p.captured = !last;
                p.weight_count = static_cast<std::size_t>(p.out.c) * p.in.size();
                p.bias_count = static_cast<std::size_t>(p.out.c);
                break;
            case LayerType::global_average_pool:
                p.name = "gap";
                break;
        }
        p.weight_offset = offset;
        p.bias_offset = offset + p.weight_count;
        offset += p.weight_count + p.bias_count;
        plan_.push_back(std::move(p));
        in = shapes[i];
    }
    params_.assign(offset, T(0));
}

template <typename T>
std::vector<float> Network<T>::parameters_f32() const {
    std::vector<float> out(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) out[i] = static_cast<float>(params_[i]);
    return out;
}

template <typename T>
void Network<T>::set_parameters_f32(std::span<const float> values) {
    if (values.size() != params_.size())
        throw std::invalid_argument("weight count does not match model architecture");
    for (std::size_t i = 0; i < values.size(); ++i) params_[i] = static_cast<T>(values[i]);
}

template <typename T>
void Network<T>::init_parameters() {
    SplitMix64 rng = stream_rng(spec_.seed, kInitStream);
    for (const LayerPlan& p : plan_) {
        if (p.weight_count == 0) continue;
        const std::size_t fan_in =
            p.type == LayerType::conv2d ? static_cast<std::size_t>(p.in.c) * 9
                                        : static_cast<std::size_t>(p.in.size());
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < p.weight_count; ++i) {
            // Drawn in float so float and double networks start identically.
            const float v = static_cast<float>((rng.next_double() * 2.0 - 1.0) * limit);
            params_[p.weight_offset + i] = static_cast<T>(v);
        }
        for (std::size_t i = 0; i < p.bias_count; ++i) params_[p.bias_offset + i] = T(0);
    }
}

template <typename T>
typename Network<T>::Workspace Network<T>::make_workspace() const {
    Workspace ws;
    ws.acts.resize(plan_.size() + 1);
    ws.acts[0].resize(static_cast<std::size_t>(spec_.input.size()));
    for (std::size_t l = 0; l < plan_.size(); ++l)
        ws.acts[l + 1].resize(static_cast<std::size_t>(plan_[l].out.size()));
    return ws;
}

template <typename T>
void Network<T>::forward_into(const Image& img, Workspace& ws) const {
    std::vector<T>& input = ws.acts[0];
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = static_cast<T>(img.pixels[i]);

    for (std::size_t l = 0; l < plan_.size(); ++l) {
        const LayerPlan& p = plan_[l];
        const std::vector<T>& in = ws.acts[l];
        std::vector<T>& out = ws.acts[l + 1];
        const T* W = params_.data() + p.weight_offset;
        const T* B = params_.data() + p.bias_offset;

        switch (p.type) {
            case LayerType::conv2d: {
                const int h = p.in.h, w = p.in.w, plane = h * w;
                for (int oc = 0; oc < p.out.c; ++oc) {
                    T* dst = out.data() + static_cast<std::size_t>(oc) * plane;
                    std::fill(dst, dst + plane, B[oc]);
                }
                for (int oc = 0; oc < p.out.c; ++oc) {
                    T* dst = out.data() + static_cast<std::size_t>(oc) * plane;
                    for (int ic = 0; ic < p.in.c; ++ic) {
                        const T* src = in.data() + static_cast<std::size_t>(ic) * plane;
                        const T* kw = W + (static_cast<std::size_t>(oc) * p.in.c + ic) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int dy = ky - 1;
                            const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                            for (int kx = 0; kx < 3; ++kx) {
                                const int dx = kx - 1;
                                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                                const T wgt = kw[ky * 3 + kx];
                                for (int y = y0; y < y1; ++y) {
                                    const T* s = src + (y + dy) * w + dx;
                                    T* d = dst + y * w;
                                    for (int x = x0; x < x1; ++x) d[x] += wgt * s[x];
                                }
                            }
                        }
                    }
                }
                break;
            }
            case LayerType::dense: {
                const std::size_t n_in = in.size();
                for (int j = 0; j < p.out.c; ++j) {
                    const T* row = W + static_cast<std::size_t>(j) * n_in;
                    T acc = B[j];
                    for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
                    out[j] = acc;
                }
                break;
            }
            case LayerType::global_average_pool: {
                const int plane = p.in.h * p.in.w;
                const T inv = T(1) / static_cast<T>(plane);
                for (int c = 0; c < p.in.c; ++c) {
                    const T* src = in.data() + static_cast<std::size_t>(c) * plane;
                    T acc = T(0);
                    for (int i = 0; i < plane; ++i) acc += src[i];
                    out[c] = acc * inv;
                }
                break;
            }
        }
        if (p.relu) {
            for (T& v : out)
                if (v < T(0)) v = T(0);
        }
    }
}

template <typename T>
std::span<const T> Network<T>::forward(const Image& img, Workspace& ws) const {
    if (img.channels != spec_.input.channels || img.height != spec_.input.height ||
        img.width != spec_.input.width)
        throw std::invalid_argument("image shape does not match model input");
    forward_into(img, ws);
    return ws.acts.back();
}

template <typename T>
int Network<T>::predict(const Image& img, Workspace& ws) const {
    std::span<const T> logits = forward(img, ws);
    return static_cast<int>(
        std::max_element(logits.begin(), logits.end()) - logits.begin());
}

template <typename T>
double Network<T>::accuracy(const Dataset& ds, std::span<const std::size_t> indices) const {
    Workspace ws = make_workspace();
    std::size_t hits = 0, total = 0;
    auto tally = [&](std::size_t i) {
        if (predict(ds.samples[i], ws) == static_cast<int>(ds.labels[i])) ++hits;
        ++total;
    };
    if (indices.empty()) {
        for (std::size_t i = 0; i < ds.samples.size(); ++i) tally(i);
    } else {
        for (std::size_t i : indices) tally(i);
    }
    if (total == 0) throw std::invalid_argument("accuracy over an empty selection");
    return static_cast<double>(hits) / static_cast<double>(total);
}

template <typename T>
std::vector<std::string> Network<T>::captured_layer_names() const {
    std::vector<std::string> names;
    for (const LayerPlan& p : plan_)
        if (p.captured) names.push_back(p.name);
    return names;
}

template <typename T>
typename Network<T>::CaptureResult Network<T>::forward_with_capture(const Dataset& ds) const {
    if (ds.samples.empty()) throw std::invalid_argument("empty dataset");
    const std::uint32_t n = static_cast<std::uint32_t>(ds.samples.size());

    CaptureResult res;
    res.trace.model_id = spec_.model_id;
    res.trace.dataset_id = ds.name;
    for (const LayerPlan& p : plan_) {
        if (!p.captured) continue;
        LayerTrace layer;
        layer.name = p.name;
        layer.n_filters = static_cast<std::uint32_t>(p.out.c);
        layer.n_samples = n;
        layer.values.assign(static_cast<std::size_t>(p.out.c) * n, 0.0f);
        res.trace.layers.push_back(std::move(layer));
    }
    res.predictions.resize(n);

    Workspace ws = make_workspace();
    std::vector<float> plane;
    for (std::uint32_t s = 0; s < n; ++s) {
        std::span<const T> logits = forward(ds.samples[s], ws);
        res.predictions[s] = static_cast<int>(
            std::max_element(logits.begin(), logits.end()) - logits.begin());
        std::size_t li = 0;
        for (std::size_t l = 0; l < plan_.size(); ++l) {
            const LayerPlan& p = plan_[l];
            if (!p.captured) continue;
            LayerTrace& layer = res.trace.layers[li++];
            const std::vector<T>& act = ws.acts[l + 1];
            if (p.out.spatial) {
                const int hw = p.out.h * p.out.w;
                plane.resize(static_cast<std::size_t>(hw));
                for (int f = 0; f < p.out.c; ++f) {
                    const T* src = act.data() + static_cast<std::size_t>(f) * hw;
                    for (int i = 0; i < hw; ++i) plane[i] = static_cast<float>(src[i]);
                    layer.values[static_cast<std::size_t>(f) * n + s] = static_cast<float>(
                        average_activation(plane, p.out.h, p.out.w));
                }
            } else {
                for (int f = 0; f < p.out.c; ++f)
                    layer.values[static_cast<std::size_t>(f) * n + s] =
                        static_cast<float>(act[f]);
            }
        }
    }
    return res;
}

template <typename T>
double Network<T>::batch_loss(const Dataset& ds, std::span<const std::size_t> idx,
                              Workspace& ws) const {
    const std::size_t n = idx.empty() ? ds.samples.size() : idx.size();
    if (n == 0) throw std::invalid_argument("empty batch");
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t s = idx.empty() ? k : idx[k];
        forward_into(ds.samples[s], ws);
        const std::vector<T>& z = ws.acts.back();
        T m = z[0];
        for (T v : z) m = std::max(m, v);
        T sum = T(0);
        for (T v : z) sum += std::exp(v - m);
        total += static_cast<double>(std::log(sum) + m - z[ds.labels[s]]);
    }
    return total / static_cast<double>(n);
}

template <typename T>
void Network<T>::backward_from_logit_grads(Workspace& ws, Workspace& bw,
                                           std::vector<T>& grads) const {
    for (std::size_t l = plan_.size(); l-- > 0;) {
        const LayerPlan& p = plan_[l];
        std::vector<T>& dout = bw.acts[l + 1];
        const std::vector<T>& out = ws.acts[l + 1];
        const std::vector<T>& in = ws.acts[l];
        std::vector<T>& din = bw.acts[l];
        const bool want_din = l > 0;
        T* dW = grads.data() + p.weight_offset;
        T* dB = grads.data() + p.bias_offset;
        const T* W = params_.data() + p.weight_offset;

        if (p.relu) {
            for (std::size_t i = 0; i < dout.size(); ++i)
                if (out[i] <= T(0)) dout[i] = T(0);
        }

        switch (p.type) {
            case LayerType::conv2d: {
                const int h = p.in.h, w = p.in.w, plane = h * w;
                if (want_din) std::fill(din.begin(), din.end(), T(0));
                for (int oc = 0; oc < p.out.c; ++oc) {
                    const T* dop = dout.data() + static_cast<std::size_t>(oc) * plane;
                    T acc = T(0);
                    for (int i = 0; i < plane; ++i) acc += dop[i];
                    dB[oc] += acc;
                }
                for (int oc = 0; oc < p.out.c; ++oc) {
                    const T* dop = dout.data() + static_cast<std::size_t>(oc) * plane;
                    for (int ic = 0; ic < p.in.c; ++ic) {
                        const T* src = in.data() + static_cast<std::size_t>(ic) * plane;
                        T* dsrc = want_din ? din.data() + static_cast<std::size_t>(ic) * plane
                                           : nullptr;
                        const std::size_t kbase =
                            (static_cast<std::size_t>(oc) * p.in.c + ic) * 9;
                        for (int ky = 0; ky < 3; ++ky) {
                            const int dy = ky - 1;
                            const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                            for (int kx = 0; kx < 3; ++kx) {
                                const int dx = kx - 1;
                                const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
                                const T wgt = W[kbase + ky * 3 + kx];
                                T g = T(0);
                                for (int y = y0; y < y1; ++y) {
                                    const T* d = dop + y * w;
                                    const T* s = src + (y + dy) * w + dx;
                                    if (dsrc) {
                                        T* ds = dsrc + (y + dy) * w + dx;
                                        for (int x = x0; x < x1; ++x) {
                                            g += d[x] * s[x];
                                            ds[x] += wgt * d[x];
                                        }
                                    } else {
                                        for (int x = x0; x < x1; ++x) g += d[x] * s[x];
                                    }
                                }
                                dW[kbase + ky * 3 + kx] += g;
                            }
                        }
                    }
                }
                break;
            }
            case LayerType::dense: {
                const std::size_t n_in = in.size();
                if (want_din) std::fill(din.begin(), din.end(), T(0));
                for (int j = 0; j < p.out.c; ++j) {
                    const T d = dout[j];
                    dB[j] += d;
                    const T* row = W + static_cast<std::size_t>(j) * n_in;
                    T* drow = dW + static_cast<std::size_t>(j) * n_in;
                    if (want_din) {
                        for (std::size_t i = 0; i < n_in; ++i) {
                            drow[i] += d * in[i];
                            din[i] += row[i] * d;
                        }
                    } else {
                        for (std::size_t i = 0; i < n_in; ++i) drow[i] += d * in[i];
                    }
                }
                break;
            }
            case LayerType::global_average_pool: {
                const int plane = p.in.h * p.in.w;
                const T inv = T(1) / static_cast<T>(plane);
                for (int c = 0; c < p.in.c; ++c) {
                    const T g = dout[c] * inv;
                    T* d = din.data() + static_cast<std::size_t>(c) * plane;
                    for (int i = 0; i < plane; ++i) d[i] = g;
                }
                break;
            }
        }
    }
}

template <typename T>
double Network<T>::batch_loss_and_grads(const Dataset& ds, std::span<const std::size_t> idx,
                                        std::vector<T>& grads, Workspace& ws,
                                        Workspace& bw) const {
    const std::size_t n = idx.empty() ? ds.samples.size() : idx.size();
    if (n == 0) throw std::invalid_argument("empty batch");
    grads.assign(params_.size(), T(0));
    const T inv_n = T(1) / static_cast<T>(n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t s = idx.empty() ? k : idx[k];
        forward_into(ds.samples[s], ws);
        const std::vector<T>& z = ws.acts.back();
        std::vector<T>& dz = bw.acts.back();
        T m = z[0];
        for (T v : z) m = std::max(m, v);
        T sum = T(0);
        for (std::size_t j = 0; j < z.size(); ++j) {
            dz[j] = std::exp(z[j] - m);
            sum += dz[j];
        }
        total += static_cast<double>(std::log(sum) + m - z[ds.labels[s]]);
        const T inv_sum = T(1) / sum;
        for (std::size_t j = 0; j < z.size(); ++j) dz[j] *= inv_sum * inv_n;
        dz[ds.labels[s]] -= inv_n;
        backward_from_logit_grads(ws, bw, grads);
    }
    return total / static_cast<double>(n);
}

template <typename T>
RetrainingReport Network<T>::train_to_accuracy(const Dataset& ds, const TrainConfig& cfg) {
    if (!(cfg.learning_rate > 0)) throw std::invalid_argument("learning rate must be positive");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch size must be positive");
    if (!(cfg.target_accuracy > 0.0 && cfg.target_accuracy <= 1.0))
        throw std::invalid_argument("target accuracy must lie in (0, 1]");
    if (cfg.max_epochs < 1) throw std::invalid_argument("max epochs must be positive");
    if (ds.samples.empty()) throw std::invalid_argument("empty dataset");
    if (ds.samples.front().channels != spec_.input.channels ||
        ds.samples.front().height != spec_.input.height ||
        ds.samples.front().width != spec_.input.width)
        throw std::invalid_argument("dataset shape does not match model input");
    if (static_cast<int>(ds.class_count) != plan_.back().out.c)
        throw std::invalid_argument("dataset class count does not match logits layer");

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t n = ds.samples.size();

    // Deterministic 90/10 train/holdout split; the holdout drives stopping.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    SplitMix64 split_rng = stream_rng(cfg.seed, 0xB19A57D1CE5ULL);
    shuffle(order, split_rng);
    const std::size_t n_hold = std::max<std::size_t>(1, n / 10);
    std::vector<std::size_t> holdout(order.end() - static_cast<std::ptrdiff_t>(n_hold),
                                     order.end());
    std::vector<std::size_t> train(order.begin(),
                                   order.end() - static_cast<std::ptrdiff_t>(n_hold));

    RetrainingReport report;
    double acc = accuracy(ds, holdout);
    report.accuracy_curve.push_back(acc);
    if (acc >= cfg.target_accuracy) {
        report.epochs_used = 0;
        report.reached_target = true;
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return report;
    }

    Workspace ws = make_workspace();
    Workspace bw = make_workspace();
    std::vector<T> grads;
    const T lr = static_cast<T>(cfg.learning_rate);

    report.epochs_used = cfg.max_epochs;
    report.reached_target = false;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        if (!train.empty()) {
            SplitMix64 epoch_rng = stream_rng(cfg.seed, static_cast<std::uint64_t>(epoch));
            shuffle(train, epoch_rng);
            double epoch_loss = 0.0;
            for (std::size_t b = 0; b < train.size();
                 b += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t e =
                    std::min(train.size(), b + static_cast<std::size_t>(cfg.batch_size));
                std::span<const std::size_t> batch(train.data() + b, e - b);
                const double loss = batch_loss_and_grads(ds, batch, grads, ws, bw);
                for (std::size_t i = 0; i < params_.size(); ++i) params_[i] -= lr * grads[i];
                epoch_loss += loss * static_cast<double>(batch.size());
            }
            report.loss_curve.push_back(epoch_loss / static_cast<double>(train.size()));
        } else {
            report.loss_curve.push_back(0.0);
        }
        acc = accuracy(ds, holdout);
        report.accuracy_curve.push_back(acc);
        if (acc >= cfg.target_accuracy) {
            report.epochs_used = epoch;
            report.reached_target = true;
            break;
        }
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

Model init_model(const ModelSpec& spec) {
    Model model(spec);
    model.init_parameters();
    return model;
}

double gradient_check(const Model& model, const Dataset& batch,
                      std::span<const std::size_t> idx) {
    Network<double> net = model.cast<double>();
    auto ws = net.make_workspace();
    auto bw = net.make_workspace();
    std::vector<double> analytic;
    net.batch_loss_and_grads(batch, idx, analytic, ws, bw);

    const double h = 1e-4;
    double worst = 0.0;
    std::vector<double>& params = net.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double lp = net.batch_loss(batch, idx, ws);
        params[i] = keep - h;
        const double lm = net.batch_loss(batch, idx, ws);
        params[i] = keep;
        const double fd = (lp - lm) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

void write_weights(const std::vector<float>& weights, const std::filesystem::path& path) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kWeightsMagic, kWeightsMagic + 4);
    wire::put_u16(out, kWeightsVersion);
    wire::put_u16(out, 0);  // flags
    wire::put_u64(out, weights.size());
    for (float v : weights) wire::put_f32(out, v);
    wire::spill(out, path);
}

std::vector<float> read_weights(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = wire::slurp(path);
    wire::Cursor cur(bytes, "ARMW file");
    char magic[4] = {'A', 'R', 'M', 'W'};
    if (!cur.magic_is(magic)) throw io_error("not an ARMW file");
    if (cur.u16() != kWeightsVersion) throw io_error("unsupported ARMW version");
    if (cur.u16() != 0) throw io_error("unsupported ARMW flags");
    const std::uint64_t count = cur.u64();
    cur.need_f32(count);
    std::vector<float> weights(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float v = cur.f32();
        if (!std::isfinite(v)) throw io_error("non-finite value in ARMW file");
        weights[i] = v;
    }
    if (cur.remaining() != 0) throw io_error("trailing bytes after ARMW payload");
    return weights;
}

bool is_builtin_model(const std::string& model_id) {
    return model_id == "toy-cnn-a" || model_id == "toy-cnn-b" || model_id == "toy-mlp";
}

std::vector<std::string> builtin_model_ids() {
    return {"toy-cnn-a", "toy-cnn-b", "toy-mlp"};
}

ModelSpec builtin_model_spec(const std::string& model_id, InputDims input,
                             std::uint32_t class_count, std::uint64_t seed) {
    ModelSpec spec;
    spec.model_id = model_id;
    spec.input = input;
    spec.seed = seed;
    const int classes = static_cast<int>(class_count);
    if (model_id == "toy-cnn-a") {
        spec.layers = {{LayerType::conv2d, 6},
                       {LayerType::conv2d, 6},
                       {LayerType::global_average_pool, 0},
                       {LayerType::dense, 16},
                       {LayerType::dense, classes}};
    } else if (model_id == "toy-cnn-b") {
        spec.layers = {{LayerType::conv2d, 4},
                       {LayerType::conv2d, 6},
                       {LayerType::conv2d, 6},
                       {LayerType::global_average_pool, 0},
                       {LayerType::dense, classes}};
    } else if (model_id == "toy-mlp") {
        spec.layers = {{LayerType::dense, 24}, {LayerType::dense, classes}};
    } else {
        throw std::invalid_argument("unknown builtin model: " + model_id);
    }
    return spec;
}

template class Network<float>;
template class Network<double>;

}  // namespace armmeter
