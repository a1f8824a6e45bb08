#pragma once

// Analytic checks of the distillation objective on problems where every score
// is known in closed form: the auxiliary-stage equilibrium under a frozen
// affine generator, the reduction to the plain score-matching two-stage form
// at alpha = coef = 1/2, and the zero-gradient point of the generator stage.

#include "cosim/distill.hpp"

#include <cstdint>
#include <vector>

namespace cosim::theory {

using nd::Tensor;

struct FixedPointCase {
    double coef = 1.0;
    double s = 0.4;
    double t = 1.0;
    double W = 1.2;  // frozen generator G(x) = W x + b, 1-D
    double b = 0.3;
    int iterations = 2000;
    int batch_size = 256;
    double lr = 2e-3;
    std::uint64_t seed = 0;
    double grid_lo = -3.0;
    double grid_hi = 3.0;
    int grid_points = 61;
};

struct FixedPointResult {
    std::vector<double> grid;
    std::vector<double> learned;  // f_psi on the grid
    std::vector<double> target;   // beta score_q + (1 - beta) score_p
    double rel_l2 = 0.0;
    double threshold = 0.05;
    bool passed() const { return rel_l2 < threshold; }
};

/// VP scheme, unit-Gaussian data (so the teacher score is exactly -x), frozen
/// affine generator. Trains an auxiliary network with the auxiliary-stage loss
/// only and compares it with the closed-form equilibrium on the grid.
FixedPointResult gaussian_fixed_point(const FixedPointCase& c);

struct GradientComparison {
    double max_abs_diff = 0.0;
    double max_abs_grad = 0.0;
    double threshold = 1e-6;
    bool passed() const { return max_abs_diff < threshold; }
};

/// 0.5 ||S - cs||^2 - 0.5 ||f - cs||^2, averaged: the generator-stage form of
/// plain semi-implicit score matching. Same gradient path as phi_loss.
Tensor sivi_phi_reference(const distill::StageModels& m, const distill::StageBatch& b, const SdeScheme& scheme);
/// 0.5 ||f - cs||^2 with x_s detached: the regression form of the auxiliary stage.
Tensor sivi_psi_reference(const distill::StageModels& m, const distill::StageBatch& b, const SdeScheme& scheme);

struct ReductionResult {
    GradientComparison phi;  // generator parameters, alpha = 0.5
    GradientComparison psi;  // auxiliary parameters, coef = 0.5
    bool passed() const { return phi.passed() && psi.passed(); }
};

/// Random small networks on ring data; compares parameter gradients of the
/// two stage losses at alpha = coef = 0.5 with the reference forms.
ReductionResult sivi_reduction(std::uint64_t seed = 0, int batch_size = 64);

struct EquilibriumResult {
    double max_abs_grad = 0.0;
    double threshold = 1e-6;
    bool passed() const { return max_abs_grad < threshold; }
};

/// VP unit Gaussian with G(x) = x and f at the coef = 1 equilibrium (-x):
/// the generator-stage gradient with respect to (W, b) must vanish.
EquilibriumResult phi_equilibrium(std::uint64_t seed = 0, int batch_size = 10000);

}  // namespace cosim::theory
