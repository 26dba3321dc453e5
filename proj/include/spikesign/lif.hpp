#pragma once

#include "spikesign/errors.hpp"

namespace spikesign {

/// Discrete-time LIF used in simulation: u = beta*u + i, spike when u >= threshold,
/// soft reset subtracts the threshold.
struct LifParamsTrain {
    double beta = 0.92;
    double threshold = 1.0;

    void validate() const
    {
        if (!(beta > 0.0 && beta < 1.0)) throw ParameterError("beta must lie in (0, 1)");
        if (!(threshold > 0.0)) throw ParameterError("threshold must be positive");
    }
};

template <typename Real>
struct LifStep {
    Real membrane; // after reset
    bool spike;
};

template <typename Real>
constexpr LifStep<Real> lif_step(Real u_prev, Real input, const LifParamsTrain& p)
{
    const Real u = static_cast<Real>(p.beta) * u_prev + input;
    const bool spike = u >= static_cast<Real>(p.threshold);
    return {spike ? u - static_cast<Real>(p.threshold) : u, spike};
}

} // namespace spikesign
