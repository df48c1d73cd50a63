#pragma once

#include "qcirc/rational.hpp"

namespace qcirc {

/// 2019 SI exact values.
inline constexpr double kElementaryCharge = 1.602176634e-19;  // C
inline constexpr double kPlanck = 6.62607015e-34;             // J s
inline constexpr double kTwoPi = 6.283185307179586476925286766559;
inline constexpr double kHbar = kPlanck / kTwoPi;

/// Cooper-pair charge 2e and flux quantum phi0 = h / 2e.
inline constexpr double kCooperPair = 2.0 * kElementaryCharge;
inline constexpr double kFluxQuantum = kPlanck / kCooperPair;

/// Exact rational mirrors used by the elimination algebra. Internally charges
/// are measured in units of 2e and fluxes in units of phi0, so these appear
/// wherever an IR coefficient carries joules per (charge or flux) unit.
inline const Rat& rat_cooper_pair() {
    static const Rat v = rat_from_double(kCooperPair);
    return v;
}
inline const Rat& rat_flux_quantum() {
    static const Rat v = rat_from_double(kPlanck) / rat_from_double(kCooperPair);
    return v;
}

}  // namespace qcirc
