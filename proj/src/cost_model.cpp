#include "armmeter/cost_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "armmeter/tensor_io.hpp"

namespace armmeter {

namespace {

void check_observation(const Observation& o) {
    if (!(o.arm >= 0.0) || !std::isfinite(o.arm))
        throw std::invalid_argument("observation arm must be finite and non-negative");
    if (!(o.epochs >= 0.0) || !std::isfinite(o.epochs))
        throw std::invalid_argument("observation epochs must be finite and non-negative");
    if (o.model_id.empty()) throw std::invalid_argument("observation needs a model_id");
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw std::invalid_argument("unformattable number");
    return std::string(buf, ptr);
}

double parse_double(std::string_view field, std::size_t row, const char* col) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v))
        throw io_error("obs file row " + std::to_string(row) + ": bad " + col + " value '" +
                       std::string(field) + "'");
    return v;
}

int parse_int(std::string_view field, std::size_t row, const char* col) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        throw io_error("obs file row " + std::to_string(row) + ": bad " + col + " value '" +
                       std::string(field) + "'");
    return v;
}

constexpr const char* kObsHeader = "model_id,noise_kind,level,arm,epochs,energy_kwh,co2_g";

}  // namespace

void validate(const PowerProfile& profile) {
    if (!(profile.avg_power_watts > 0))
        throw std::invalid_argument("avg_power_watts must be positive");
    if (!(profile.epoch_seconds > 0))
        throw std::invalid_argument("epoch_seconds must be positive");
    if (!(profile.carbon_intensity_g_per_kwh >= 0))
        throw std::invalid_argument("carbon_intensity_g_per_kwh must be non-negative");
}

Predictor fit_predictor(std::span<const Observation> obs) {
    if (obs.size() < 2) throw std::invalid_argument("need at least 2 observations");
    for (const Observation& o : obs) check_observation(o);

    struct Group {
        double sx = 0.0, sy = 0.0;
        std::size_t n = 0;
    };
    std::map<std::string, Group> groups;
    for (const Observation& o : obs) {
        Group& g = groups[o.model_id];
        g.sx += o.arm;
        g.sy += o.epochs;
        ++g.n;
    }

    // Within estimator: demean x and y inside each model, then pool.
    double num = 0.0, den = 0.0;
    for (const Observation& o : obs) {
        const Group& g = groups.at(o.model_id);
        const double dx = o.arm - g.sx / static_cast<double>(g.n);
        const double dy = o.epochs - g.sy / static_cast<double>(g.n);
        num += dx * dy;
        den += dx * dx;
    }
    if (den == 0.0)
        throw std::invalid_argument("degenerate fit: arm values within each model are all equal");

    Predictor pred;
    pred.slope = num / den;
    for (const auto& [id, g] : groups) {
        pred.intercepts[id] =
            g.sy / static_cast<double>(g.n) - pred.slope * g.sx / static_cast<double>(g.n);
        pred.fitted_on.push_back(id);
    }
    return pred;
}

LineFit fit_line(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("series length mismatch");
    if (xs.size() < 2) throw std::invalid_argument("need at least 2 points");
    const double n = static_cast<double>(xs.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxx += (xs[i] - mx) * (xs[i] - mx);
        sxy += (xs[i] - mx) * (ys[i] - my);
    }
    if (sxx == 0.0) throw std::invalid_argument("degenerate fit: x values are all equal");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

Predictor anchor_intercept(const Predictor& pred, const std::string& model_id,
                           const Observation& one_obs, bool overwrite) {
    if (!std::isfinite(pred.slope)) throw std::invalid_argument("predictor slope is not finite");
    if (pred.intercepts.count(model_id) && !overwrite)
        throw std::invalid_argument("model already has an intercept: " + model_id);
    check_observation(one_obs);
    Predictor out = pred;
    out.intercepts[model_id] = one_obs.epochs - pred.slope * one_obs.arm;
    return out;
}

double predict_epochs(const Predictor& pred, const std::string& model_id, double arm) {
    auto it = pred.intercepts.find(model_id);
    if (it == pred.intercepts.end())
        throw std::invalid_argument("unknown model: " + model_id);
    return std::max(0.0, pred.slope * arm + it->second);
}

double energy_estimate(double epochs, const PowerProfile& profile) {
    validate(profile);
    if (!(epochs >= 0)) throw std::invalid_argument("epochs must be non-negative");
    return epochs * profile.epoch_seconds * profile.avg_power_watts / 3.6e6;
}

double carbon_estimate(double kwh, const PowerProfile& profile) {
    validate(profile);
    if (!(kwh >= 0)) throw std::invalid_argument("kwh must be non-negative");
    return kwh * profile.carbon_intensity_g_per_kwh;
}

namespace {

// Continued-fraction core of the incomplete beta function (modified Lentz).
double beta_cf(double a, double b, double x) {
    constexpr double kTiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 500; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 3e-15) return h;
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0) || !(b > 0)) throw std::invalid_argument("beta parameters must be positive");
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double log_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(log_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * beta_cf(a, b, x) / a;
    return 1.0 - bt * beta_cf(b, a, 1.0 - x) / b;
}

Correlation pearson(std::span<const double> xs, std::span<const double> ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("series length mismatch");
    if (xs.size() < 3) throw std::invalid_argument("need at least 3 points");
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(xs[i]) || !std::isfinite(ys[i]))
            throw std::invalid_argument("non-finite input");
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx, dy = ys[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("zero variance input");

    Correlation out;
    out.r = sxy / std::sqrt(sxx * syy);
    out.r = std::clamp(out.r, -1.0, 1.0);

    const double df = static_cast<double>(n - 2);
    const double r2 = out.r * out.r;
    if (r2 >= 1.0) {
        out.p = 0.0;
        return out;
    }
    // t = r*sqrt(df/(1-r^2)); two-sided p = I_{df/(df+t^2)}(df/2, 1/2).
    const double t2 = r2 * df / (1.0 - r2);
    out.p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t2));
    return out;
}

std::string observations_to_csv(std::span<const Observation> obs) {
    std::string out = kObsHeader;
    out += '\n';
    for (const Observation& o : obs) {
        check_observation(o);
        if (o.model_id.find_first_of(",\n\r") != std::string::npos)
            throw std::invalid_argument("model_id must not contain commas or line breaks");
        out += o.model_id;
        out += ',';
        out += to_string(o.noise_kind);
        out += ',';
        out += std::to_string(o.level);
        out += ',';
        out += format_double(o.arm);
        out += ',';
        out += format_double(o.epochs);
        out += ',';
        if (o.energy_kwh) out += format_double(*o.energy_kwh);
        out += ',';
        if (o.co2_g) out += format_double(*o.co2_g);
        out += '\n';
    }
    return out;
}

std::vector<Observation> observations_from_csv(const std::string& text) {
    std::vector<Observation> out;
    std::istringstream in(text);
    std::string line;
    std::size_t row = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kObsHeader)
                throw io_error("obs file row 1: expected header '" + std::string(kObsHeader) +
                               "'");
            saw_header = true;
            continue;
        }
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (fields.size() != 7)
            throw io_error("obs file row " + std::to_string(row) + ": expected 7 columns, got " +
                           std::to_string(fields.size()));
        Observation o;
        o.model_id = fields[0];
        if (o.model_id.empty())
            throw io_error("obs file row " + std::to_string(row) + ": empty model_id");
        try {
            o.noise_kind = noise_kind_from_string(fields[1]);
        } catch (const std::invalid_argument&) {
            throw io_error("obs file row " + std::to_string(row) + ": unknown noise kind '" +
                           fields[1] + "'");
        }
        o.level = parse_int(fields[2], row, "level");
        o.arm = parse_double(fields[3], row, "arm");
        o.epochs = parse_double(fields[4], row, "epochs");
        if (!fields[5].empty()) o.energy_kwh = parse_double(fields[5], row, "energy_kwh");
        if (!fields[6].empty()) o.co2_g = parse_double(fields[6], row, "co2_g");
        if (o.arm < 0.0)
            throw io_error("obs file row " + std::to_string(row) + ": negative arm");
        if (o.epochs < 0.0)
            throw io_error("obs file row " + std::to_string(row) + ": negative epochs");
        out.push_back(std::move(o));
    }
    if (!saw_header) throw io_error("obs file is empty");
    return out;
}

void write_observations(std::span<const Observation> obs, const std::filesystem::path& path) {
    const std::string text = observations_to_csv(obs);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open file for writing: " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw io_error("write failed: " + path.string());
}

std::vector<Observation> read_observations(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw io_error("cannot read file: " + path.string());
    return observations_from_csv(ss.str());
}

}  // namespace armmeter
