#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "armmeter/model.hpp"
#include "armmeter/rng.hpp"
#include "armmeter/tensor_io.hpp"

using namespace armmeter;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "armmeter-model-tests";
    std::filesystem::create_directories(dir);
    return dir;
}

Image image_1x1xN(std::vector<float> px) {
    Image img;
    img.channels = 1;
    img.height = 1;
    img.width = static_cast<int>(px.size());
    img.pixels = std::move(px);
    return img;
}

// Small dataset with deterministic pseudo-random pixels in [0,1].
Dataset random_dataset(int n, int c, int h, int w, std::uint32_t classes,
                       std::uint64_t seed) {
    Dataset ds;
    ds.name = "rnd";
    ds.class_count = classes;
    SplitMix64 rng(seed);
    for (int s = 0; s < n; ++s) {
        Image img;
        img.channels = c;
        img.height = h;
        img.width = w;
        img.pixels.resize(static_cast<std::size_t>(c) * h * w);
        for (float& p : img.pixels) p = static_cast<float>(rng.next_double());
        ds.samples.push_back(std::move(img));
        ds.labels.push_back(static_cast<std::uint32_t>(rng.next_below(classes)));
    }
    return ds;
}

// Independent conv oracle: 3x3 same-convolution with zero padding, double math.
double conv_oracle_mean(const Image& img, const std::vector<float>& weights,
                        int oc, int in_c, double bias) {
    const int h = img.height, w = img.width;
    double sum = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = bias;
            for (int ic = 0; ic < in_c; ++ic) {
                for (int ky = 0; ky < 3; ++ky) {
                    for (int kx = 0; kx < 3; ++kx) {
                        const int sy = y + ky - 1, sx = x + kx - 1;
                        if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                        acc += static_cast<double>(
                                   weights[(static_cast<std::size_t>(oc) * in_c + ic) * 9 +
                                           ky * 3 + kx]) *
                               img.at(ic, sy, sx);
                    }
                }
            }
            sum += std::max(0.0, acc);  // ReLU
        }
    }
    return sum / (static_cast<double>(h) * w);
}

ModelSpec tiny_dense_spec(int inputs, int classes, std::uint64_t seed = 0) {
    ModelSpec spec;
    spec.model_id = "tiny";
    spec.input = {1, 1, inputs};
    spec.layers = {{LayerType::dense, classes}};
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("layer type names round-trip") {
    for (LayerType t :
         {LayerType::conv2d, LayerType::dense, LayerType::global_average_pool})
        CHECK(layer_type_from_string(to_string(t)) == t);
    CHECK_THROWS_AS(layer_type_from_string("maxpool"), std::invalid_argument);
}

TEST_CASE("validate_model_spec tracks shapes through the stack") {
    ModelSpec spec = builtin_model_spec("toy-cnn-a", {1, 16, 16}, 4, 0);
    auto shapes = validate_model_spec(spec);
    REQUIRE(shapes.size() == 5);
    CHECK(shapes[0].c == 6);
    CHECK(shapes[0].spatial);
    CHECK(shapes[0].h == 16);
    CHECK(shapes[1].c == 6);
    CHECK_FALSE(shapes[2].spatial);  // gap flattens
    CHECK(shapes[2].c == 6);
    CHECK(shapes[3].c == 16);
    CHECK(shapes[4].c == 4);
}

TEST_CASE("validate_model_spec rejects malformed architectures") {
    ModelSpec spec;
    spec.input = {1, 4, 4};

    spec.layers = {};
    CHECK_THROWS_AS(validate_model_spec(spec), std::invalid_argument);

    spec.layers = {{LayerType::conv2d, 2}};  // final layer must be dense
    CHECK_THROWS_AS(validate_model_spec(spec), std::invalid_argument);

    spec.layers = {{LayerType::dense, 2}, {LayerType::conv2d, 2}, {LayerType::dense, 2}};
    CHECK_THROWS_AS(validate_model_spec(spec), std::invalid_argument);  // conv on flat

    spec.layers = {{LayerType::dense, 2}, {LayerType::global_average_pool, 0},
                   {LayerType::dense, 2}};
    CHECK_THROWS_AS(validate_model_spec(spec), std::invalid_argument);  // pool on flat

    spec.layers = {{LayerType::dense, 0}};
    CHECK_THROWS_AS(validate_model_spec(spec), std::invalid_argument);

    spec.layers = {{LayerType::dense, 2}};
    spec.input = {0, 4, 4};
    CHECK_THROWS_AS(validate_model_spec(spec), std::invalid_argument);
}

TEST_CASE("builtin model catalogue") {
    auto ids = builtin_model_ids();
    REQUIRE(ids.size() == 3);
    for (const auto& id : ids) CHECK(is_builtin_model(id));
    CHECK_FALSE(is_builtin_model("resnet50"));
    CHECK_THROWS_AS(builtin_model_spec("resnet50", {1, 8, 8}, 2, 0),
                    std::invalid_argument);

    // Layer counts are part of the contract.
    CHECK(builtin_model_spec("toy-cnn-a", {1, 16, 16}, 4, 0).layers.size() == 5);
    CHECK(builtin_model_spec("toy-cnn-b", {1, 16, 16}, 4, 0).layers.size() == 5);
    CHECK(builtin_model_spec("toy-mlp", {1, 16, 16}, 4, 0).layers.size() == 2);
}

TEST_CASE("parameter counts match the architecture") {
    // Single dense logits layer on 3 inputs, 4 classes: 3*4 weights + 4 biases.
    Model tiny(tiny_dense_spec(3, 4));
    CHECK(tiny.parameter_count() == 16);

    // toy-mlp on 1x16x16, 4 classes: 256*24+24 then 24*4+4.
    Model mlp(builtin_model_spec("toy-mlp", {1, 16, 16}, 4, 0));
    CHECK(mlp.parameter_count() == 6268);

    // Fresh networks start with all parameters zero.
    for (float v : tiny.parameters()) CHECK(v == 0.0f);
}

TEST_CASE("init_parameters is seed-deterministic with zero biases") {
    ModelSpec spec = builtin_model_spec("toy-cnn-a", {1, 8, 8}, 3, 42);
    Model a = init_model(spec);
    Model b = init_model(spec);
    CHECK(a.parameters() == b.parameters());

    spec.seed = 43;
    Model c = init_model(spec);
    CHECK(a.parameters() != c.parameters());

    // The draw is made in float, so a double network starts bit-identically.
    Network<double> d(builtin_model_spec("toy-cnn-a", {1, 8, 8}, 3, 42));
    d.init_parameters();
    CHECK(d.parameters_f32() == a.parameters_f32());

    // Dense logits layer of the tiny spec: weights then biases; biases zero,
    // weights within the He-uniform bound sqrt(6/fan_in).
    Model tiny = init_model(tiny_dense_spec(3, 4, 7));
    const double limit = std::sqrt(6.0 / 3.0);
    bool any_nonzero = false;
    for (std::size_t i = 0; i < 12; ++i) {
        CHECK(std::abs(tiny.parameters()[i]) <= limit);
        any_nonzero = any_nonzero || tiny.parameters()[i] != 0.0f;
    }
    CHECK(any_nonzero);
    for (std::size_t i = 12; i < 16; ++i) CHECK(tiny.parameters()[i] == 0.0f);
}

TEST_CASE("dense forward computes W x + b with the documented layout") {
    Model net(tiny_dense_spec(2, 2));
    // Row-major rows per output unit, then biases.
    net.set_parameters_f32(std::vector<float>{1.f, 2.f, 3.f, 4.f, 0.1f, 0.2f});
    auto ws = net.make_workspace();
    Image img = image_1x1xN({0.5f, 0.25f});
    auto logits = net.forward(img, ws);
    REQUIRE(logits.size() == 2);
    CHECK(logits[0] == doctest::Approx(0.1 + 1 * 0.5 + 2 * 0.25).epsilon(1e-6));
    CHECK(logits[1] == doctest::Approx(0.2 + 3 * 0.5 + 4 * 0.25).epsilon(1e-6));
    CHECK(net.predict(img, ws) == 1);

    Image bad = image_1x1xN({0.5f});
    CHECK_THROWS_AS(net.forward(bad, ws), std::invalid_argument);
    CHECK_THROWS_AS(net.set_parameters_f32(std::vector<float>(5, 0.f)),
                    std::invalid_argument);
}

TEST_CASE("zero-weight conv layers pass relu(bias) to the head") {
    ModelSpec spec;
    spec.model_id = "zc";
    spec.input = {1, 4, 4};
    spec.layers = {{LayerType::conv2d, 2},
                   {LayerType::global_average_pool, 0},
                   {LayerType::dense, 2}};
    Model net(spec);
    // conv: 2*1*9=18 weights + 2 biases; dense: 2*2=4 weights + 2 biases.
    std::vector<float> params(26, 0.f);
    params[18] = 0.3f;   // conv bias, filter 0
    params[19] = -0.2f;  // conv bias, filter 1 (relu clamps to 0)
    params[20] = 1.f;    // dense row 0: picks filter 0
    params[23] = 1.f;    // dense row 1: picks filter 1
    net.set_parameters_f32(params);

    Dataset ds = random_dataset(3, 1, 4, 4, 2, 5);
    auto cap = net.forward_with_capture(ds);
    REQUIRE(cap.trace.layers.size() == 1);  // only the conv layer is captured
    CHECK(cap.trace.layers[0].name == "conv1");
    CHECK(cap.trace.layers[0].n_filters == 2);
    for (std::uint32_t s = 0; s < 3; ++s) {
        CHECK(cap.trace.layers[0].at(0, s) == doctest::Approx(0.3).epsilon(1e-6));
        CHECK(cap.trace.layers[0].at(1, s) == 0.0f);
        CHECK(cap.predictions[s] == 0);  // logits (0.3, 0)
    }
}

TEST_CASE("captured activations match an independent slow path") {
    // MLP: hidden layer trace must equal relu(W x + b) computed by hand.
    ModelSpec mspec;
    mspec.model_id = "cap-mlp";
    mspec.input = {1, 1, 3};
    mspec.layers = {{LayerType::dense, 2}, {LayerType::dense, 2}};
    mspec.seed = 9;
    Model mlp = init_model(mspec);
    Dataset ds = random_dataset(5, 1, 1, 3, 2, 6);

    auto cap = mlp.forward_with_capture(ds);
    REQUIRE(cap.trace.layers.size() == 1);
    CHECK(cap.trace.layers[0].name == "dense1");
    const auto& p = mlp.parameters();
    for (std::uint32_t s = 0; s < 5; ++s) {
        for (int j = 0; j < 2; ++j) {
            double acc = p[6 + j];  // bias after the 2x3 weight block
            for (int i = 0; i < 3; ++i)
                acc += static_cast<double>(p[static_cast<std::size_t>(j) * 3 + i]) *
                       ds.samples[s].pixels[static_cast<std::size_t>(i)];
            const double expect = std::max(0.0, acc);
            CHECK(cap.trace.layers[0].at(static_cast<std::uint32_t>(j), s) ==
                  doctest::Approx(expect).epsilon(1e-6));
        }
    }

    // Conv: per-filter spatial means must match the zero-padding oracle.
    ModelSpec cspec;
    cspec.model_id = "cap-cnn";
    cspec.input = {1, 5, 5};
    cspec.layers = {{LayerType::conv2d, 3},
                    {LayerType::global_average_pool, 0},
                    {LayerType::dense, 2}};
    cspec.seed = 11;
    Model cnn = init_model(cspec);
    Dataset cds = random_dataset(4, 1, 5, 5, 2, 8);
    auto ccap = cnn.forward_with_capture(cds);
    REQUIRE(ccap.trace.layers.size() == 1);
    const auto& cp = cnn.parameters();
    std::vector<float> w(cp.begin(), cp.begin() + 27);
    for (std::uint32_t s = 0; s < 4; ++s) {
        for (int oc = 0; oc < 3; ++oc) {
            const double expect =
                conv_oracle_mean(cds.samples[s], w, oc, 1, cp[27 + oc]);
            CHECK(std::abs(ccap.trace.layers[0].at(static_cast<std::uint32_t>(oc), s) -
                           expect) < 1e-5);
        }
    }

    // Predictions from the capture pass agree with predict().
    auto ws = cnn.make_workspace();
    for (std::uint32_t s = 0; s < 4; ++s)
        CHECK(ccap.predictions[s] == cnn.predict(cds.samples[s], ws));
}

TEST_CASE("zero network loss is ln(classes)") {
    Model net(tiny_dense_spec(3, 4));
    Dataset ds = random_dataset(6, 1, 1, 3, 4, 3);
    auto ws = net.make_workspace();
    CHECK(net.batch_loss(ds, {}, ws) == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("duplicating a batch sample leaves the mean gradient unchanged") {
    Model net = init_model(tiny_dense_spec(3, 3, 21));
    Dataset ds = random_dataset(4, 1, 1, 3, 3, 13);
    auto ws = net.make_workspace();
    auto bw = net.make_workspace();
    std::vector<float> g1, g2;
    std::vector<std::size_t> once = {2};
    std::vector<std::size_t> twice = {2, 2};
    net.batch_loss_and_grads(ds, once, g1, ws, bw);
    net.batch_loss_and_grads(ds, twice, g2, ws, bw);
    REQUIRE(g1.size() == g2.size());
    for (std::size_t i = 0; i < g1.size(); ++i)
        CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-5));
}

TEST_CASE("analytic gradients match finite differences away from relu kinks") {
    ModelSpec spec;
    spec.model_id = "gc";
    spec.input = {1, 5, 5};
    spec.layers = {{LayerType::conv2d, 2},
                   {LayerType::global_average_pool, 0},
                   {LayerType::dense, 3},
                   {LayerType::dense, 2}};
    spec.seed = 31;
    Model net = init_model(spec);
    // Positive weights with positive inputs keep every pre-activation away
    // from the relu kink, where central differences are exact.
    for (float& v : net.parameters()) v = std::abs(v) + 0.01f;
    Dataset ds = random_dataset(3, 1, 5, 5, 2, 77);
    CHECK(gradient_check(net, ds) < 1e-4);

    // Same check through an index subset.
    std::vector<std::size_t> idx = {0, 2};
    CHECK(gradient_check(net, ds, idx) < 1e-4);
}

TEST_CASE("train_to_accuracy returns epoch zero when already at target") {
    // A hand-built classifier that reads the single pixel sign split.
    ModelSpec spec = tiny_dense_spec(1, 2);
    Model net(spec);
    net.set_parameters_f32(std::vector<float>{10.f, -10.f, -5.f, 5.f});
    Dataset ds;
    ds.name = "split";
    ds.class_count = 2;
    for (int i = 0; i < 40; ++i) {
        const float v = (i % 2 == 0) ? 0.9f : 0.1f;
        ds.samples.push_back(image_1x1xN({v}));
        ds.labels.push_back(i % 2 == 0 ? 0u : 1u);
    }
    TrainConfig cfg;
    cfg.target_accuracy = 0.9;
    cfg.seed = 5;
    RetrainingReport rep = net.train_to_accuracy(ds, cfg);
    CHECK(rep.epochs_used == 0);
    CHECK(rep.reached_target);
    REQUIRE(rep.accuracy_curve.size() == 1);
    CHECK(rep.accuracy_curve[0] == 1.0);
    CHECK(rep.loss_curve.empty());
    CHECK(rep.wall_seconds >= 0.0);
}

TEST_CASE("training is deterministic and learns a separable problem") {
    auto make_ds = [] {
        Dataset ds;
        ds.name = "sep";
        ds.class_count = 2;
        SplitMix64 rng(99);
        for (int i = 0; i < 200; ++i) {
            const int cls = i % 2;
            const float base = cls == 0 ? 0.2f : 0.8f;
            Image img = image_1x1xN(
                {base + 0.05f * static_cast<float>(rng.next_double() - 0.5),
                 base + 0.05f * static_cast<float>(rng.next_double() - 0.5)});
            ds.samples.push_back(std::move(img));
            ds.labels.push_back(static_cast<std::uint32_t>(cls));
        }
        return ds;
    };
    Dataset ds = make_ds();
    ModelSpec spec = tiny_dense_spec(2, 2, 3);
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.target_accuracy = 0.95;
    cfg.max_epochs = 50;
    cfg.seed = 17;

    Model a = init_model(spec);
    RetrainingReport ra = a.train_to_accuracy(ds, cfg);
    CHECK(ra.reached_target);
    CHECK(ra.epochs_used >= 1);
    CHECK(ra.accuracy_curve.back() >= cfg.target_accuracy);
    CHECK(ra.accuracy_curve.size() == static_cast<std::size_t>(ra.epochs_used) + 1);
    CHECK(ra.loss_curve.size() == static_cast<std::size_t>(ra.epochs_used));

    Model b = init_model(spec);
    RetrainingReport rb = b.train_to_accuracy(ds, cfg);
    CHECK(a.parameters() == b.parameters());
    CHECK(ra.epochs_used == rb.epochs_used);
    CHECK(ra.accuracy_curve == rb.accuracy_curve);
    CHECK(ra.loss_curve == rb.loss_curve);
}

TEST_CASE("train_to_accuracy validates its inputs") {
    Model net(tiny_dense_spec(2, 2));
    Dataset ds = random_dataset(20, 1, 1, 2, 2, 1);
    TrainConfig cfg;

    TrainConfig bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(net.train_to_accuracy(ds, bad), std::invalid_argument);
    bad = cfg;
    bad.batch_size = 0;
    CHECK_THROWS_AS(net.train_to_accuracy(ds, bad), std::invalid_argument);
    bad = cfg;
    bad.target_accuracy = 1.5;
    CHECK_THROWS_AS(net.train_to_accuracy(ds, bad), std::invalid_argument);
    bad = cfg;
    bad.max_epochs = 0;
    CHECK_THROWS_AS(net.train_to_accuracy(ds, bad), std::invalid_argument);

    Dataset empty;
    empty.class_count = 2;
    CHECK_THROWS_AS(net.train_to_accuracy(empty, cfg), std::invalid_argument);

    Dataset wrong_shape = random_dataset(10, 1, 1, 3, 2, 1);
    CHECK_THROWS_AS(net.train_to_accuracy(wrong_shape, cfg), std::invalid_argument);

    Dataset wrong_classes = random_dataset(10, 1, 1, 2, 3, 1);
    CHECK_THROWS_AS(net.train_to_accuracy(wrong_classes, cfg), std::invalid_argument);
}

TEST_CASE("cast round-trips parameters") {
    Model a = init_model(tiny_dense_spec(3, 2, 12));
    Model back = a.cast<double>().cast<float>();
    CHECK(back.parameters() == a.parameters());
}

TEST_CASE("weight files round-trip and reject corruption") {
    auto dir = temp_dir();
    std::vector<float> w = {0.f, -1.5f, 3.25f, 1e-7f};
    auto path = dir / "w.armw";
    write_weights(w, path);
    CHECK(read_weights(path) == w);

    // Truncations at every prefix fail loudly.
    std::vector<std::uint8_t> bytes;
    {
        std::ifstream in(path, std::ios::binary);
        bytes.assign(std::istreambuf_iterator<char>(in), {});
    }
    for (std::size_t cut = 0; cut < bytes.size(); ++cut) {
        auto part = dir / "part.armw";
        std::ofstream out(part, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(cut));
        out.close();
        CHECK_THROWS_AS(read_weights(part), io_error);
    }

    // Wrong magic.
    bytes[0] = 'X';
    auto badmagic = dir / "bad.armw";
    {
        std::ofstream out(badmagic, std::ios::binary | std::ios::trunc);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(read_weights(badmagic), io_error);

    CHECK_THROWS_AS(read_weights(dir / "missing.armw"), io_error);
}

TEST_CASE("accuracy over an empty selection throws") {
    Model net(tiny_dense_spec(2, 2));
    Dataset empty;
    empty.class_count = 2;
    CHECK_THROWS_AS(net.accuracy(empty), std::invalid_argument);
}
