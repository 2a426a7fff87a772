#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bvtrack/tensor.hpp"

namespace bvtrack {

/// Full gradient-equation matrix  M_Gamma + rho A_h.
class GradientSystemOperator {
public:
    GradientSystemOperator(const TensorSpace& space, double rho)
        : mass_(space)
        , h1_(build_h1_operator(space))
        , rho_(rho)
    {
    }

    GradientSystemOperator(BoundaryMassOperator mass, KronSumOperator h1, double rho)
        : mass_(std::move(mass))
        , h1_(std::move(h1))
        , rho_(rho)
    {
    }

    [[nodiscard]] std::size_t rows() const noexcept { return h1_.size(); }
    [[nodiscard]] std::size_t cols() const noexcept { return h1_.size(); }
    [[nodiscard]] double rho() const noexcept { return rho_; }
    [[nodiscard]] const BoundaryMassOperator& boundary_mass() const noexcept { return mass_; }
    [[nodiscard]] const KronSumOperator& h1() const noexcept { return h1_; }

    void apply(std::span<const double> in, std::span<double> out) const
    {
        std::vector<double> t(out.size());
        mass_.apply(in, out);
        h1_.apply(in, t);
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += rho_ * t[i];
        }
    }

    [[nodiscard]] std::vector<double> apply(std::span<const double> in) const
    {
        std::vector<double> out(rows());
        apply(in, out);
        return out;
    }

    [[nodiscard]] std::vector<double> diagonal() const
    {
        auto d = mass_.diagonal();
        const auto a = h1_.diagonal();
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] += rho_ * a[i];
        }
        return d;
    }

private:
    BoundaryMassOperator mass_;
    KronSumOperator h1_;
    double rho_;
};

} // namespace bvtrack
