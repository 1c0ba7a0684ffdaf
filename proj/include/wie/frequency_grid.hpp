#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "wie/error.hpp"
#include "wie/symbols.hpp"

namespace wie {

using Complex = std::complex<double>;

namespace fft {

/// In-place radix-2 transform, sum_j a_j exp(sign * 2 pi i jk/n), unnormalised.
inline void transform(std::span<Complex> a, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const Complex w = std::polar(1.0, ang * static_cast<double>(k));
                const Complex u = a[i + k];
                const Complex v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

/// Transform along every axis of an n^dim array stored axis-0-fastest.
inline void transform_nd(std::vector<Complex>& data, int n, int dim, int sign) {
    std::vector<Complex> line(n);
    const std::size_t total = data.size();
    std::size_t stride = 1;
    for (int d = 0; d < dim; ++d) {
        for (std::size_t base = 0; base < total; ++base) {
            if ((base / stride) % n != 0) continue;
            for (int i = 0; i < n; ++i) line[i] = data[base + i * stride];
            transform(line, sign);
            for (int i = 0; i < n; ++i) data[base + i * stride] = line[i];
        }
        stride *= n;
    }
}

}  // namespace fft

/// Frequency nodes with positive quadrature weights.
///
/// UniformFFT discretises the periodic box [-L, L)^N (N in {1, 2}) with n points per
/// axis; nodes are the discrete frequencies k * pi / L in FFT order and carry the
/// weight (pi / L)^N. Transforms use the unitary angular convention
/// u_hat(xi) = (2 pi)^{-N/2} \int u(x) exp(-i xi.x) dx, so the discrete Parseval
/// identity holds with constant 1.
class FrequencyGrid {
public:
    enum class Mode { UniformFFT, ExplicitList };

    static FrequencyGrid uniform_fft(int dimension, int points, double half_width) {
        if (dimension != 1 && dimension != 2) throw InvalidArgument("FFT grid dimension must be 1 or 2");
        if (points < 2 || (points & (points - 1)) != 0)
            throw InvalidArgument("FFT grid points per axis must be a power of two");
        if (!(half_width > 0.0)) throw InvalidArgument("FFT grid half-width must be positive");
        FrequencyGrid g;
        g.mode_ = Mode::UniformFFT;
        g.points_ = points;
        g.half_width_ = half_width;
        g.nodes_.dimension = dimension;
        const double dxi = std::numbers::pi / half_width;
        std::size_t total = 1;
        for (int d = 0; d < dimension; ++d) total *= points;
        g.nodes_.coords.reserve(total * dimension);
        for (std::size_t flat = 0; flat < total; ++flat) {
            std::size_t rem = flat;
            for (int d = 0; d < dimension; ++d) {
                g.nodes_.coords.push_back(dxi * signed_index(static_cast<int>(rem % points), points));
                rem /= points;
            }
        }
        g.weights_.assign(total, std::pow(dxi, dimension));
        return g;
    }

    static FrequencyGrid explicit_list(FrequencySamples nodes, std::vector<double> weights) {
        if (nodes.size() == 0) throw InvalidArgument("explicit frequency list is empty");
        if (weights.size() != nodes.size()) throw InvalidArgument("explicit list: one weight per node required");
        for (double w : weights)
            if (!(w > 0.0)) throw InvalidArgument("explicit list: weights must be positive");
        FrequencyGrid g;
        g.mode_ = Mode::ExplicitList;
        g.nodes_ = std::move(nodes);
        g.weights_ = std::move(weights);
        return g;
    }

    Mode mode() const { return mode_; }
    int dimension() const { return nodes_.dimension; }
    std::size_t size() const { return weights_.size(); }
    std::span<const double> node(std::size_t k) const { return nodes_[k]; }
    double weight(std::size_t k) const { return weights_[k]; }
    const FrequencySamples& samples() const { return nodes_; }
    int points_per_axis() const { return points_; }
    double half_width() const { return half_width_; }

    std::string describe() const {
        if (mode_ == Mode::ExplicitList) return "explicit(" + std::to_string(size()) + " nodes)";
        return "fft(N=" + std::to_string(dimension()) + ",n=" + std::to_string(points_) +
               ",L=" + csv::format_double(half_width_) + ")";
    }

    /// Index of the node at -xi (the Nyquist node is its own partner), or -1.
    long partner(std::size_t k) const {
        if (mode_ == Mode::UniformFFT) {
            std::size_t rem = k, out = 0, stride = 1;
            for (int d = 0; d < dimension(); ++d) {
                const std::size_t i = rem % points_;
                rem /= points_;
                out += ((points_ - i) % points_) * stride;
                stride *= points_;
            }
            return static_cast<long>(out);
        }
        for (std::size_t j = 0; j < size(); ++j) {
            bool match = true;
            for (int d = 0; d < dimension() && match; ++d) match = nodes_[j][d] == -nodes_[k][d];
            if (match) return static_cast<long>(j);
        }
        return -1;
    }

    double dx() const { return 2.0 * half_width_ / points_; }
    double physical_cell() const { return std::pow(dx(), dimension()); }

    /// Physical coordinate along one axis for index j: -L + j dx.
    double physical_coordinate(int j) const { return -half_width_ + j * dx(); }

    /// Physical samples from Fourier values at every node.
    std::vector<Complex> to_physical(std::span<const Complex> hat) const {
        require_fft();
        std::vector<Complex> data(hat.begin(), hat.end());
        for (std::size_t k = 0; k < data.size(); ++k) data[k] *= std::exp(Complex(0.0, -phase(k)));
        fft::transform_nd(data, points_, dimension(), +1);
        const double scale = std::pow(std::numbers::pi / half_width_ / std::sqrt(2.0 * std::numbers::pi), dimension());
        for (auto& v : data) v *= scale;
        return data;
    }

    /// Real physical samples; the imaginary residue must stay below `tol` relative to the field.
    std::vector<double> to_physical_real(std::span<const Complex> hat, double tol = 1e-10) const {
        const auto c = to_physical(hat);
        double peak = 0.0, residue = 0.0;
        for (const auto& v : c) {
            peak = std::max(peak, std::abs(v.real()));
            residue = std::max(residue, std::abs(v.imag()));
        }
        if (residue > tol * std::max(peak, 1.0))
            throw InvalidArgument("inverse transform: imaginary residue " + csv::format_double(residue) +
                                  " exceeds tolerance; field is not conjugate symmetric");
        std::vector<double> out(c.size());
        for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
        return out;
    }

    std::vector<Complex> to_fourier(std::span<const Complex> u) const {
        require_fft();
        std::vector<Complex> data(u.begin(), u.end());
        fft::transform_nd(data, points_, dimension(), -1);
        const double scale = std::pow(dx() / std::sqrt(2.0 * std::numbers::pi), dimension());
        for (std::size_t k = 0; k < data.size(); ++k) data[k] *= scale * std::exp(Complex(0.0, phase(k)));
        return data;
    }

private:
    static int signed_index(int i, int n) { return i < n / 2 ? i : i - n; }

    double phase(std::size_t k) const {
        double s = 0.0;
        for (double v : nodes_[k]) s += v;
        return s * half_width_;
    }

    void require_fft() const {
        if (mode_ != Mode::UniformFFT) throw InvalidArgument("physical transforms need a UniformFFT grid");
    }

    Mode mode_ = Mode::ExplicitList;
    int points_ = 0;
    double half_width_ = 0.0;
    FrequencySamples nodes_;
    std::vector<double> weights_;
};

}  // namespace wie
