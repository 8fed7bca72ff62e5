#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace armmeter {

/// Malformed or unreadable on-disk artifact. The CLI maps this to exit code 3.
class io_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// One image: 32-bit pixels in [0,1], row-major, channel-first.
struct Image {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<float> pixels;

    int pixel_count() const { return channels * height * width; }
    float at(int c, int y, int x) const { return pixels[(c * height + y) * width + x]; }
    float& at(int c, int y, int x) { return pixels[(c * height + y) * width + x]; }
};

/// Labeled image dataset. All samples share one (channels, height, width).
/// `name` is a runtime label only; the ARMD format does not store it.
struct Dataset {
    std::string name;
    std::uint32_t class_count = 0;
    std::vector<Image> samples;
    std::vector<std::uint32_t> labels;

    std::size_t size() const { return samples.size(); }
};

/// Per-layer activations: one spatially averaged scalar per filter per sample,
/// filter-major (values[f * n_samples + s]).
struct LayerTrace {
    std::string name;
    std::uint32_t n_filters = 0;
    std::uint32_t n_samples = 0;
    std::vector<float> values;

    float at(std::uint32_t f, std::uint32_t s) const {
        return values[static_cast<std::size_t>(f) * n_samples + s];
    }
    const float* filter_row(std::uint32_t f) const {
        return values.data() + static_cast<std::size_t>(f) * n_samples;
    }
    bool operator==(const LayerTrace&) const = default;
};

/// Whole-dataset activation trace in model forward order. model_id and
/// dataset_id are runtime metadata; the ATF format does not serialize them.
struct ActivationTrace {
    std::string model_id;
    std::string dataset_id;
    std::vector<LayerTrace> layers;
};

/// Layer payload equality, ignoring the runtime model/dataset ids.
bool layers_equal(const ActivationTrace& a, const ActivationTrace& b);

/// True when layer names, order and filter counts all match.
bool same_layout(const ActivationTrace& a, const ActivationTrace& b);

// Throw std::invalid_argument when an in-memory value violates an invariant.
void validate(const Image& img);
void validate(const Dataset& ds);
void validate(const ActivationTrace& trace);

// ---------------------------------------------------------------------------
// On-disk formats (little-endian, magic + version)
//
// ATF  (activation trace): "ARMT" | u16 version=1 | u16 flags=0 |
//      u32 layer_count | per layer: u16 name_len, name bytes (UTF-8),
//      u32 n_filters, u32 n_samples, n_filters*n_samples f32 (filter-major).
// ARMD (dataset): "ARMD" | u16 version=1 | u32 sample_count, u32 class_count,
//      u16 channels, u16 height, u16 width | pixels for all samples
//      (sample-major, channel-first) | labels as u32 array.
// ---------------------------------------------------------------------------

void write_trace(const ActivationTrace& trace, const std::filesystem::path& path);
ActivationTrace read_trace(const std::filesystem::path& path);

/// Parse a trace from an in-memory buffer (same validation as read_trace).
ActivationTrace parse_trace(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_trace(const ActivationTrace& trace);

void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

Dataset parse_dataset(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_dataset(const Dataset& ds);

}  // namespace armmeter
