#include "armmeter/tensor_io.hpp"

#include <cmath>
#include <limits>

#include "armmeter/detail/wire.hpp"

namespace armmeter {

namespace {

using wire::Cursor;
using wire::put_f32;
using wire::put_u16;
using wire::put_u32;
using wire::slurp;
using wire::spill;

constexpr char kTraceMagic[4] = {'A', 'R', 'M', 'T'};
constexpr char kDatasetMagic[4] = {'A', 'R', 'M', 'D'};
constexpr std::uint16_t kFormatVersion = 1;

}  // namespace

bool layers_equal(const ActivationTrace& a, const ActivationTrace& b) {
    return a.layers == b.layers;
}

bool same_layout(const ActivationTrace& a, const ActivationTrace& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].name != b.layers[i].name) return false;
        if (a.layers[i].n_filters != b.layers[i].n_filters) return false;
    }
    return true;
}

void validate(const Image& img) {
    if (img.channels < 1 || img.height < 1 || img.width < 1)
        throw std::invalid_argument("image dimensions must be positive");
    if (img.pixels.size() != static_cast<std::size_t>(img.pixel_count()))
        throw std::invalid_argument("pixel count does not match dimensions");
    for (float p : img.pixels) {
        if (!(p >= 0.0f && p <= 1.0f)) throw std::invalid_argument("pixel out of range");
    }
}

void validate(const Dataset& ds) {
    if (ds.class_count == 0) throw std::invalid_argument("class count must be positive");
    if (ds.samples.empty()) throw std::invalid_argument("empty dataset");
    if (ds.labels.size() != ds.samples.size())
        throw std::invalid_argument("label count does not match sample count");
    const Image& first = ds.samples.front();
    for (const Image& img : ds.samples) {
        if (img.channels != first.channels || img.height != first.height ||
            img.width != first.width)
            throw std::invalid_argument("dimension mismatch across samples");
        validate(img);
    }
    for (std::uint32_t label : ds.labels) {
        if (label >= ds.class_count) throw std::invalid_argument("label out of range");
    }
}

void validate(const ActivationTrace& trace) {
    if (trace.layers.empty()) throw std::invalid_argument("empty trace");
    const std::uint32_t n = trace.layers.front().n_samples;
    for (const LayerTrace& layer : trace.layers) {
        if (layer.n_filters == 0 || layer.n_samples == 0)
            throw std::invalid_argument("empty layer in trace");
        if (layer.n_samples != n)
            throw std::invalid_argument("n_samples differs across layers");
        if (layer.values.size() !=
            static_cast<std::size_t>(layer.n_filters) * layer.n_samples)
            throw std::invalid_argument("value count does not match layer shape");
        if (layer.name.size() > 0xFFFF) throw std::invalid_argument("layer name too long");
        for (float v : layer.values) {
            if (!std::isfinite(v)) throw std::invalid_argument("non-finite value in trace");
        }
    }
}

std::vector<std::uint8_t> serialize_trace(const ActivationTrace& trace) {
    validate(trace);
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kTraceMagic, kTraceMagic + 4);
    put_u16(out, kFormatVersion);
    put_u16(out, 0);  // flags
    put_u32(out, static_cast<std::uint32_t>(trace.layers.size()));
    for (const LayerTrace& layer : trace.layers) {
        put_u16(out, static_cast<std::uint16_t>(layer.name.size()));
        out.insert(out.end(), layer.name.begin(), layer.name.end());
        put_u32(out, layer.n_filters);
        put_u32(out, layer.n_samples);
        for (float v : layer.values) put_f32(out, v);
    }
    return out;
}

ActivationTrace parse_trace(const std::vector<std::uint8_t>& bytes) {
    Cursor cur(bytes, "ATF file");
    if (!cur.magic_is(kTraceMagic)) throw io_error("not an ATF file");
    if (cur.u16() != kFormatVersion) throw io_error("unsupported ATF version");
    if (cur.u16() != 0) throw io_error("unsupported ATF flags");
    const std::uint32_t layer_count = cur.u32();
    if (layer_count == 0) throw io_error("empty trace");

    ActivationTrace trace;
    trace.layers.reserve(std::min<std::uint32_t>(layer_count, 1024));
    std::uint32_t n_samples = 0;
    for (std::uint32_t l = 0; l < layer_count; ++l) {
        LayerTrace layer;
        const std::uint16_t name_len = cur.u16();
        layer.name = cur.bytes(name_len);
        layer.n_filters = cur.u32();
        layer.n_samples = cur.u32();
        if (layer.n_filters == 0 || layer.n_samples == 0)
            throw io_error("empty layer in ATF file");
        if (l == 0) {
            n_samples = layer.n_samples;
        } else if (layer.n_samples != n_samples) {
            throw io_error("n_samples differs across layers in ATF file");
        }
        const std::uint64_t count =
            static_cast<std::uint64_t>(layer.n_filters) * layer.n_samples;
        cur.need_f32(count);
        layer.values.resize(count);
        for (std::uint64_t i = 0; i < count; ++i) {
            float v = cur.f32();
            if (!std::isfinite(v)) throw io_error("non-finite value in ATF file");
            layer.values[i] = v;
        }
        trace.layers.push_back(std::move(layer));
    }
    if (cur.remaining() != 0) throw io_error("trailing bytes after ATF payload");
    return trace;
}

void write_trace(const ActivationTrace& trace, const std::filesystem::path& path) {
    spill(serialize_trace(trace), path);
}

ActivationTrace read_trace(const std::filesystem::path& path) {
    return parse_trace(slurp(path));
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& ds) {
    validate(ds);
    const Image& first = ds.samples.front();
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kDatasetMagic, kDatasetMagic + 4);
    put_u16(out, kFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(ds.samples.size()));
    put_u32(out, ds.class_count);
    put_u16(out, static_cast<std::uint16_t>(first.channels));
    put_u16(out, static_cast<std::uint16_t>(first.height));
    put_u16(out, static_cast<std::uint16_t>(first.width));
    for (const Image& img : ds.samples) {
        for (float p : img.pixels) put_f32(out, p);
    }
    for (std::uint32_t label : ds.labels) put_u32(out, label);
    return out;
}

Dataset parse_dataset(const std::vector<std::uint8_t>& bytes) {
    Cursor cur(bytes, "ARMD file");
    if (!cur.magic_is(kDatasetMagic)) throw io_error("not an ARMD file");
    if (cur.u16() != kFormatVersion) throw io_error("unsupported ARMD version");
    const std::uint32_t sample_count = cur.u32();
    const std::uint32_t class_count = cur.u32();
    const std::uint16_t channels = cur.u16();
    const std::uint16_t height = cur.u16();
    const std::uint16_t width = cur.u16();
    if (sample_count == 0) throw io_error("empty dataset");
    if (class_count == 0) throw io_error("class count must be positive");
    if (channels == 0 || height == 0 || width == 0)
        throw io_error("image dimensions must be positive");

    const std::uint64_t per_image =
        static_cast<std::uint64_t>(channels) * height * width;

    // Each sample carries per_image floats plus one u32 label; reject header
    // counts the file cannot possibly hold before allocating anything.
    if (sample_count > cur.remaining() / (per_image * 4 + 4))
        throw io_error("truncated ARMD file");

    Dataset ds;
    ds.class_count = class_count;
    ds.samples.resize(sample_count);
    for (std::uint32_t s = 0; s < sample_count; ++s) {
        Image& img = ds.samples[s];
        img.channels = channels;
        img.height = height;
        img.width = width;
        // Reject before allocating: the declared payload must fit the file.
        cur.need_f32(per_image);
        img.pixels.resize(per_image);
        for (std::uint64_t i = 0; i < per_image; ++i) {
            float p = cur.f32();
            if (!(p >= 0.0f && p <= 1.0f)) throw io_error("pixel out of range");
            img.pixels[i] = p;
        }
    }
    ds.labels.resize(sample_count);
    for (std::uint32_t s = 0; s < sample_count; ++s) {
        std::uint32_t label = cur.u32();
        if (label >= class_count) throw io_error("label out of range");
        ds.labels[s] = label;
    }
    if (cur.remaining() != 0) throw io_error("trailing bytes after ARMD payload");
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    spill(serialize_dataset(ds), path);
}

Dataset read_dataset(const std::filesystem::path& path) {
    Dataset ds = parse_dataset(slurp(path));
    ds.name = path.stem().string();
    return ds;
}

}  // namespace armmeter
