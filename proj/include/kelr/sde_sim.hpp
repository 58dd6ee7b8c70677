/*
   Copyright 2026 The kelr Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

        http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

/**
 * @file sde_sim.hpp
 * @brief Benchmark systems (triple-well gradient SDE, Langevin with a Morse potential),
 *        their Gibbs densities and the integrators that produce stationary time series.
 */

#ifndef KELR_SDE_SIM_HPP
#define KELR_SDE_SIM_HPP

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace kelr {

// ---------------------------------------------------------------------------------------
// Sample series

/// Stationary time series, row-major N x d.
struct SampleSeries {
    std::size_t dim = 0;
    std::vector<double> data;
    double dt_effective = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t burn_in = 0;

    std::size_t size() const noexcept { return dim == 0 ? 0 : data.size() / dim; }
    std::span<const double> row(std::size_t n) const { return {data.data() + n * dim, dim}; }

    std::vector<double> column(std::size_t i) const {
        std::vector<double> c(size());
        for (std::size_t n = 0; n < c.size(); ++n) c[n] = data[n * dim + i];
        return c;
    }

    void validate() const {
        if (dim == 0 || data.empty() || data.size() % dim != 0)
            throw ParameterError("sample series must hold at least one complete row");
        if (!(dt_effective > 0.0)) throw ParameterError("dt_effective must be positive");
        for (std::size_t k = 0; k < data.size(); ++k)
            if (!std::isfinite(data[k]))
                throw NumericError("non-finite sample at row " + std::to_string(k / dim));
    }

    friend bool operator==(const SampleSeries&, const SampleSeries&) = default;
};

// ---------------------------------------------------------------------------------------
// Random numbers

/// Seeded standard-normal stream. Different `stream` ids give independent generators for
/// the same seed (splitmix64 mixing into a seed_seq).
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed, std::uint64_t stream = 0) {
        std::uint64_t s = seed ^ (0x9E3779B97F4A7C15ull * (stream + 1));
        std::array<std::uint32_t, 8> words{};
        for (auto& w : words) w = static_cast<std::uint32_t>(splitmix(s) >> 32);
        std::seed_seq seq(words.begin(), words.end());
        engine_.seed(seq);
    }

    /// Marsaglia polar method on 53-bit uniforms; bit-identical for a given seed.
    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double uniform() { return double(engine_() >> 11) * 0x1.0p-53; }

private:
    static std::uint64_t splitmix(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---------------------------------------------------------------------------------------
// Potentials

/// 10 exp(1 / (z^2 - a^2)) on |z| < a, zero outside. A guard band of 1e-12 keeps the
/// exponent finite at the support boundary.
inline double bump_function(double z, double a, double amplitude = 10.0) {
    if (std::abs(z) >= a - 1e-12) return 0.0;
    return amplitude * std::exp(1.0 / (z * z - a * a));
}

inline double bump_derivative(double z, double a, double amplitude = 10.0) {
    if (std::abs(z) >= a - 1e-12) return 0.0;
    const double q = z * z - a * a;
    return bump_function(z, a, amplitude) * (-2.0 * z / (q * q));
}

/// V(x) = -v(|x - c1|^2) - (1-g) v(|x - c2|^2) - (1+g) v(|x - c3|^2) + retain |x - c0|^2
/// with wells c1 = (0,0), c2 = (2a,0), c3 = (a, sqrt(3) a) and c0 = (a, a/sqrt(3)).
struct TripleWell {
    double a = 1.0;
    double kBT = 1.5;
    double gamma = 0.25;
    double bump_amplitude = 10.0;
    double retain = 0.8;

    static constexpr std::size_t dim = 2;

    std::array<std::array<double, 2>, 3> wells() const {
        return {{{0.0, 0.0}, {2.0 * a, 0.0}, {a, std::sqrt(3.0) * a}}};
    }
    std::array<double, 3> depths() const { return {1.0, 1.0 - gamma, 1.0 + gamma}; }
    std::array<double, 2> retain_center() const { return {a, a / std::sqrt(3.0)}; }

    double value(std::span<const double> x) const {
        const auto w = wells();
        const auto g = depths();
        const auto c0 = retain_center();
        double v = 0.0;
        for (int k = 0; k < 3; ++k) {
            const double dx = x[0] - w[k][0], dy = x[1] - w[k][1];
            v -= g[k] * bump_function(dx * dx + dy * dy, a, bump_amplitude);
        }
        const double rx = x[0] - c0[0], ry = x[1] - c0[1];
        return v + retain * (rx * rx + ry * ry);
    }

    friend bool operator==(const TripleWell&, const TripleWell&) = default;

    void gradient(std::span<const double> x, std::span<double> out) const {
        const auto w = wells();
        const auto g = depths();
        const auto c0 = retain_center();
        out[0] = 2.0 * retain * (x[0] - c0[0]);
        out[1] = 2.0 * retain * (x[1] - c0[1]);
        for (int k = 0; k < 3; ++k) {
            const double dx = x[0] - w[k][0], dy = x[1] - w[k][1];
            const double dv = bump_derivative(dx * dx + dy * dy, a, bump_amplitude);
            if (dv == 0.0) continue;
            out[0] -= g[k] * dv * 2.0 * dx;
            out[1] -= g[k] * dv * 2.0 * dy;
        }
    }
};

/// U(x) = U0(a (x - x0)), U0(y) = eps (e^{-2y} - 2 e^{-y} + 0.03 y^2); damping gamma.
struct Morse {
    double epsilon = 0.2;
    double a = 10.0;
    double x0 = 0.0;
    double kBT = 1.0;
    double gamma = 0.5;

    static constexpr std::size_t dim = 2;  // (x, v) phase space

    double value(double x) const {
        const double y = a * (x - x0);
        return epsilon * (std::exp(-2.0 * y) - 2.0 * std::exp(-y) + 0.03 * y * y);
    }
    double derivative(double x) const {
        const double y = a * (x - x0);
        return a * epsilon * (-2.0 * std::exp(-2.0 * y) + 2.0 * std::exp(-y) + 0.06 * y);
    }

    friend bool operator==(const Morse&, const Morse&) = default;
};

using Potential = std::variant<TripleWell, Morse>;

// ---------------------------------------------------------------------------------------
// Integrators

enum class Integrator { WeakTrapezoidal, EulerMaruyama };

struct SimulationOptions {
    double h = 1e-3;
    std::uint64_t n_steps = 0;  // total steps, burn-in included
    std::uint64_t subsample = 1;
    std::uint64_t burn_in = 100000;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
    std::vector<double> initial;  // empty: system default
};

namespace detail {

inline std::size_t recorded_count(const SimulationOptions& o) {
    if (!(o.h > 0.0) || !std::isfinite(o.h)) throw ParameterError("step size h must be positive");
    if (o.subsample == 0) throw ParameterError("subsample factor must be >= 1");
    if (o.n_steps == 0) throw ParameterError("n_steps = 0 gives an empty series");
    if (o.n_steps <= o.burn_in)
        throw ParameterError("n_steps (" + std::to_string(o.n_steps) + ") must exceed burn_in (" +
                             std::to_string(o.burn_in) + ")");
    const std::uint64_t n = (o.n_steps - o.burn_in) / o.subsample;
    if (n == 0) throw ParameterError("no samples recorded after burn-in and subsampling");
    return static_cast<std::size_t>(n);
}

inline void check_finite(std::span<const double> x, std::uint64_t step) {
    for (double v : x)
        if (!std::isfinite(v))
            throw NumericError("integration blow-up at step " + std::to_string(step));
}

}  // namespace detail

using DriftFn = std::function<void(std::span<const double>, std::span<double>)>;

/// dX = b(X) dt + sigma dW with constant scalar sigma.
/// Weak trapezoidal (theta = 1/2, additive noise):
///   y      = x + b(x) h/2 + sigma sqrt(h/2) xi_1
///   x_next = y + (2 b(y) - b(x)) h/2 + sigma sqrt(h/2) xi_2
inline SampleSeries simulate_additive_sde(const DriftFn& drift, double sigma, std::vector<double> x,
                                          const SimulationOptions& opt, Integrator integrator) {
    const std::size_t n_rec = detail::recorded_count(opt);
    const std::size_t d = x.size();
    if (d == 0) throw ParameterError("initial state must be non-empty");
    SampleSeries out;
    out.dim = d;
    out.dt_effective = opt.h * double(opt.subsample);
    out.seed = opt.seed;
    out.burn_in = opt.burn_in;
    out.data.reserve(n_rec * d);

    NormalStream noise(opt.seed, opt.stream);
    std::vector<double> bx(d), by(d), y(d);
    const double h = opt.h;
    const double half_amp = sigma * std::sqrt(0.5 * h);
    const double em_amp = sigma * std::sqrt(h);
    for (std::uint64_t step = 1; step <= opt.n_steps; ++step) {
        drift(x, bx);
        if (integrator == Integrator::WeakTrapezoidal) {
            for (std::size_t i = 0; i < d; ++i) y[i] = x[i] + 0.5 * h * bx[i] + half_amp * noise();
            drift(y, by);
            for (std::size_t i = 0; i < d; ++i)
                x[i] = y[i] + 0.5 * h * (2.0 * by[i] - bx[i]) + half_amp * noise();
        } else {
            for (std::size_t i = 0; i < d; ++i) x[i] += h * bx[i] + em_amp * noise();
        }
        detail::check_finite(x, step);
        if (step > opt.burn_in && (step - opt.burn_in) % opt.subsample == 0)
            out.data.insert(out.data.end(), x.begin(), x.end());
    }
    return out;
}

/// dx = -grad V(x) dt + sqrt(2 kBT) dW. Starts at the retaining-potential center unless
/// opt.initial is set.
inline SampleSeries simulate_gradient_system(const TripleWell& pot, const SimulationOptions& opt,
                                             Integrator integrator = Integrator::WeakTrapezoidal) {
    std::vector<double> x0 = opt.initial;
    if (x0.empty()) {
        const auto c = pot.retain_center();
        x0 = {c[0], c[1]};
    }
    if (x0.size() != 2) throw ParameterError("triple-well state is two-dimensional");
    auto drift = [&pot](std::span<const double> x, std::span<double> b) {
        pot.gradient(x, b);
        b[0] = -b[0];
        b[1] = -b[1];
    };
    return simulate_additive_sde(drift, std::sqrt(2.0 * pot.kBT), std::move(x0), opt, integrator);
}

/// x' = v, v' = -U'(x) - gamma v + sqrt(2 gamma kBT) W', integrated with the BAOAB splitting
/// (half kick, half drift, exact Ornstein-Uhlenbeck, half drift, half kick). Columns (x, v).
inline SampleSeries simulate_langevin(const Morse& pot, const SimulationOptions& opt) {
    const std::size_t n_rec = detail::recorded_count(opt);
    double x = pot.x0, v = 0.0;
    if (!opt.initial.empty()) {
        if (opt.initial.size() != 2) throw ParameterError("Langevin state is (x, v)");
        x = opt.initial[0];
        v = opt.initial[1];
    }
    SampleSeries out;
    out.dim = 2;
    out.dt_effective = opt.h * double(opt.subsample);
    out.seed = opt.seed;
    out.burn_in = opt.burn_in;
    out.data.reserve(2 * n_rec);

    NormalStream noise(opt.seed, opt.stream);
    const double h = opt.h;
    const double c1 = std::exp(-pot.gamma * h);
    const double c2 = std::sqrt(pot.kBT * (1.0 - c1 * c1));
    double force = -pot.derivative(x);
    for (std::uint64_t step = 1; step <= opt.n_steps; ++step) {
        v += 0.5 * h * force;
        x += 0.5 * h * v;
        v = c1 * v + c2 * noise();
        x += 0.5 * h * v;
        force = -pot.derivative(x);
        v += 0.5 * h * force;
        if (!std::isfinite(x) || !std::isfinite(v))
            throw NumericError("integration blow-up at step " + std::to_string(step));
        if (step > opt.burn_in && (step - opt.burn_in) % opt.subsample == 0) {
            out.data.push_back(x);
            out.data.push_back(v);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------------
// Analytic equilibrium densities

/// Gibbs density exp(log_unnormalized - log_Z) with log_Z from a tensor-grid trapezoid rule.
/// The grid (box and point counts) used for log_Z is kept for expectations.
struct EquilibriumDensity {
    std::size_t dim = 0;
    std::function<double(std::span<const double>)> log_unnormalized;
    std::function<void(std::span<const double>, std::span<double>)> gradient_log;
    double log_Z = 0.0;
    std::vector<double> lower;
    std::vector<double> upper;
    std::size_t points = 0;  // per dimension

    double log_density(std::span<const double> x) const { return log_unnormalized(x) - log_Z; }
    double density(std::span<const double> x) const { return std::exp(log_density(x)); }

    /// Trapezoid estimate of E_p[fn(X)] on the normalization grid.
    double expectation(const std::function<double(std::span<const double>)>& fn) const {
        return grid_sum([&](std::span<const double> x, double w) { return w * fn(x) * density(x); });
    }

    template <class Term>
    double grid_sum(Term&& term) const {
        std::vector<double> step(dim), x(dim);
        double cell = 1.0;
        for (std::size_t i = 0; i < dim; ++i) {
            step[i] = (upper[i] - lower[i]) / double(points - 1);
            cell *= step[i];
        }
        std::vector<std::size_t> idx(dim, 0);
        double total = 0.0;
        for (;;) {
            double w = cell;
            for (std::size_t i = 0; i < dim; ++i) {
                x[i] = lower[i] + step[i] * double(idx[i]);
                if (idx[i] == 0 || idx[i] == points - 1) w *= 0.5;
            }
            total += term(std::span<const double>(x), w);
            std::size_t i = 0;
            while (i < dim && ++idx[i] == points) idx[i++] = 0;
            if (i == dim) break;
        }
        return total;
    }
};

namespace detail {

// log of the trapezoid integral of exp(log_f) on the box, n points per dimension.
inline double log_trapezoid(const std::function<double(std::span<const double>)>& log_f,
                            const std::vector<double>& lo, const std::vector<double>& hi, std::size_t n) {
    EquilibriumDensity grid;
    grid.dim = lo.size();
    grid.lower = lo;
    grid.upper = hi;
    grid.points = n;
    double lmax = -std::numeric_limits<double>::infinity();
    grid.grid_sum([&](std::span<const double> x, double) {
        lmax = std::max(lmax, log_f(x));
        return 0.0;
    });
    const double s = grid.grid_sum([&](std::span<const double> x, double w) { return w * std::exp(log_f(x) - lmax); });
    return std::log(s) + lmax;
}

// Largest relative density on each box face: index 2*i (lower face), 2*i+1 (upper face).
inline std::vector<double> face_levels(const std::function<double(std::span<const double>)>& log_f,
                                       const std::vector<double>& lo, const std::vector<double>& hi, std::size_t n) {
    const std::size_t d = lo.size();
    EquilibriumDensity grid;
    grid.dim = d;
    grid.lower = lo;
    grid.upper = hi;
    grid.points = n;
    double lmax = -std::numeric_limits<double>::infinity();
    std::vector<double> face(2 * d, -std::numeric_limits<double>::infinity());
    grid.grid_sum([&](std::span<const double> x, double) {
        const double l = log_f(x);
        lmax = std::max(lmax, l);
        for (std::size_t i = 0; i < d; ++i) {
            if (x[i] == lo[i]) face[2 * i] = std::max(face[2 * i], l);
            if (x[i] == hi[i]) face[2 * i + 1] = std::max(face[2 * i + 1], l);
        }
        return 0.0;
    });
    for (auto& f : face) f = std::exp(f - lmax);
    return face;
}

}  // namespace detail

/// Builds the Gibbs density of a potential. log_Z comes from trapezoid quadrature on a box
/// whose faces are pushed out (up to 4 times) until the boundary density is below 1e-12 of
/// the maximum, refined by point doubling until successive values agree to 1e-10.
inline EquilibriumDensity analytic_equilibrium(const Potential& potential) {
    EquilibriumDensity eq;
    eq.dim = 2;
    std::vector<double> lo(2), hi(2);
    if (const auto* tw = std::get_if<TripleWell>(&potential)) {
        const TripleWell p = *tw;
        eq.log_unnormalized = [p](std::span<const double> x) { return -p.value(x) / p.kBT; };
        eq.gradient_log = [p](std::span<const double> x, std::span<double> g) {
            p.gradient(x, g);
            g[0] /= -p.kBT;
            g[1] /= -p.kBT;
        };
        const auto c = p.retain_center();
        const double sd = std::sqrt(p.kBT / (2.0 * p.retain));
        const double half = 5.0 * sd + 2.0 * p.a;
        lo = {c[0] - half, c[1] - half};
        hi = {c[0] + half, c[1] + half};
    } else {
        const Morse p = std::get<Morse>(potential);
        eq.log_unnormalized = [p](std::span<const double> x) {
            return -(p.value(x[0]) + 0.5 * x[1] * x[1]) / p.kBT;
        };
        eq.gradient_log = [p](std::span<const double> x, std::span<double> g) {
            g[0] = -p.derivative(x[0]) / p.kBT;
            g[1] = -x[1] / p.kBT;
        };
        const double sd_x = std::sqrt(p.kBT / (0.06 * p.epsilon * p.a * p.a));
        const double sd_v = std::sqrt(p.kBT);
        lo = {p.x0 - 1.0 / p.a, -6.0 * sd_v};
        hi = {p.x0 + 3.0 * sd_x, 6.0 * sd_v};
    }

    constexpr std::size_t kCoarse = 257;
    constexpr double kFaceTol = 1e-12;
    bool contained = false;
    for (int expansion = 0; expansion <= 4; ++expansion) {
        const auto faces = detail::face_levels(eq.log_unnormalized, lo, hi, kCoarse);
        contained = true;
        for (std::size_t i = 0; i < 2; ++i) {
            const double width = hi[i] - lo[i];
            if (faces[2 * i] >= kFaceTol) {
                contained = false;
                if (expansion < 4) lo[i] -= 0.5 * width;
            }
            if (faces[2 * i + 1] >= kFaceTol) {
                contained = false;
                if (expansion < 4) hi[i] += 0.5 * width;
            }
        }
        if (contained) break;
    }
    if (!contained) throw NumericError("equilibrium quadrature box did not converge after 4 expansions");

    std::size_t n = kCoarse;
    double prev = detail::log_trapezoid(eq.log_unnormalized, lo, hi, n);
    bool converged = false;
    while (n < 4097) {
        n = 2 * n - 1;
        const double cur = detail::log_trapezoid(eq.log_unnormalized, lo, hi, n);
        const double rel = std::abs(std::expm1(cur - prev));
        prev = cur;
        if (rel <= 1e-10) {
            converged = true;
            break;
        }
    }
    if (!converged) throw NumericError("equilibrium quadrature did not converge under grid refinement");
    eq.log_Z = prev;
    eq.lower = lo;
    eq.upper = hi;
    eq.points = n;
    return eq;
}

// ---------------------------------------------------------------------------------------
// Persistence

inline constexpr char kSampleMagic[8] = {'F', 'D', 'T', 'S', 'A', 'M', 'P', '1'};
inline constexpr std::size_t kSampleHeaderBytes = 64;

namespace detail {

template <class T>
void put_le(unsigned char* dst, T value) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(dst, bytes, sizeof(T));
}

template <class T>
T get_le(const unsigned char* src) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, src, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T value;
    std::memcpy(&value, bytes, sizeof(T));
    return value;
}

}  // namespace detail

/// Header: magic "FDTSAMP1" @0, u32 d @8, u64 N @12, f64 dt_effective @20, u64 seed @28,
/// zero-filled to 64 bytes; then N*d little-endian float64 values, row-major.
inline void write_samples_binary(const std::string& path, const SampleSeries& s) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path + " for writing");
    unsigned char header[kSampleHeaderBytes] = {};
    std::memcpy(header, kSampleMagic, 8);
    detail::put_le<std::uint32_t>(header + 8, static_cast<std::uint32_t>(s.dim));
    detail::put_le<std::uint64_t>(header + 12, static_cast<std::uint64_t>(s.size()));
    detail::put_le<double>(header + 20, s.dt_effective);
    detail::put_le<std::uint64_t>(header + 28, s.seed);
    os.write(reinterpret_cast<const char*>(header), kSampleHeaderBytes);
    std::vector<unsigned char> buf(s.data.size() * 8);
    for (std::size_t k = 0; k < s.data.size(); ++k) detail::put_le<double>(buf.data() + 8 * k, s.data[k]);
    os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!os) throw IoError("write failed for " + path);
}

inline SampleSeries read_samples_binary(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    unsigned char header[kSampleHeaderBytes];
    if (!is.read(reinterpret_cast<char*>(header), kSampleHeaderBytes)) throw IoError("truncated header in " + path);
    if (std::memcmp(header, kSampleMagic, 8) != 0) throw IoError("bad magic in " + path);
    SampleSeries s;
    s.dim = detail::get_le<std::uint32_t>(header + 8);
    const auto n = detail::get_le<std::uint64_t>(header + 12);
    s.dt_effective = detail::get_le<double>(header + 20);
    s.seed = detail::get_le<std::uint64_t>(header + 28);
    std::vector<unsigned char> buf(std::size_t(n) * s.dim * 8);
    if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        throw IoError("truncated sample payload in " + path);
    s.data.resize(std::size_t(n) * s.dim);
    for (std::size_t k = 0; k < s.data.size(); ++k) s.data[k] = detail::get_le<double>(buf.data() + 8 * k);
    return s;
}

/// CSV with header x1,...,xd and one row per sample, values printed round-trip exact.
inline void write_samples_csv(const std::string& path, const SampleSeries& s) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    for (std::size_t i = 0; i < s.dim; ++i) os << (i ? "," : "") << 'x' << (i + 1);
    os << '\n' << std::setprecision(17);
    for (std::size_t n = 0; n < s.size(); ++n) {
        for (std::size_t i = 0; i < s.dim; ++i) os << (i ? "," : "") << s.data[n * s.dim + i];
        os << '\n';
    }
    if (!os) throw IoError("write failed for " + path);
}

}  // namespace kelr

#endif  // KELR_SDE_SIM_HPP
