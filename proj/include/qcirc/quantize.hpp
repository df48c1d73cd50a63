#pragma once

#include <Eigen/SparseCore>
#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qcirc/ham.hpp"
#include "qcirc/reduce.hpp"

namespace qcirc {

using SparseOp = Eigen::SparseMatrix<std::complex<double>>;

struct ModeBasis {
    enum class Kind { Charge, Oscillator, FluxGrid };
    Kind kind = Kind::Oscillator;
    int mode = 0;

    // Charge: integer charge states n in [-N, N].
    int charge_N = 40;
    // Oscillator: ladder dimension and impedance scale (x = x0 + s(c+c')/sqrt2).
    int osc_N = 60;
    double s = 0.0;
    // FluxGrid: m points per phase period 2*pi; dim points; cyclic wraps shifts.
    int grid_m = 16;
    int grid_N = 0;   // 0 = auto
    bool cyclic = false;

    double x0 = 0.0;  // center in phase radians (filled at assembly)
    int dim = 0;      // filled at assembly

    std::string describe() const;
};

struct QuantizeOptions {
    int charge_N = 40;
    int osc_N = 60;
    int grid_N = 512;
    int grid_m = 16;
    struct Override {
        std::optional<ModeBasis::Kind> kind;
        std::optional<int> N;
        std::optional<int> m;
    };
    std::map<std::string, Override> overrides;  // by pair label
    bool check_convergence = false;
};

/// Per-mode basis choice: compact pairs get the charge basis, charge-cosine or
/// implicit-bearing pairs a flux grid, doubly-quadratic pairs an oscillator.
std::vector<ModeBasis> select_bases(const EnergyExpr& h, const ReducedSystem& rs,
                                    const QuantizeOptions& opt);

struct AssembledOperator {
    SparseOp matrix;
    std::vector<ModeBasis> bases;  // geometry filled in
    std::vector<std::string> caveats;
    long dim = 0;
};

/// Truncated-operator assembly under [Phi_i, Q_j] = i hbar delta_ij,
/// tensor products over modes in pair order.
AssembledOperator assemble(const EnergyExpr& h, const ReducedSystem& rs,
                           const std::vector<ModeBasis>& bases,
                           const std::map<std::string, double>& symbols);

struct SpectrumResult {
    std::vector<double> eigenvalues;  // joules, ascending
    int requested_levels = 0;
    std::vector<int> truncations;     // per-mode dims
    std::vector<std::string> basis_desc;
    std::optional<double> convergence_estimate;  // max |E_k(N) - E_k(2N)|
    std::map<std::string, double> parameters;
    std::vector<std::string> caveats;
};

/// Lowest k eigenvalues: dense below dimension 4096, Lanczos above.
SpectrumResult spectrum(const AssembledOperator& op, int k);

/// assemble + spectrum + metadata; reruns at doubled truncation when
/// opt.check_convergence is set.
SpectrumResult compute_spectrum(const EnergyExpr& h, const ReducedSystem& rs,
                                const QuantizeOptions& opt,
                                const std::map<std::string, double>& symbols, int k);

/// Spectra over a symbol sweep (deterministic order).
std::vector<SpectrumResult> sweep(const EnergyExpr& h, const ReducedSystem& rs,
                                  const QuantizeOptions& opt,
                                  const std::map<std::string, double>& symbols,
                                  const std::string& symbol, const std::vector<double>& values,
                                  int k);

/// Lowest-k eigenvalues of a sparse Hermitian matrix by thick-restart Lanczos
/// with full reorthogonalization. Exposed for testing against the dense path.
std::vector<double> lanczos_lowest(const SparseOp& h, int k);

}  // namespace qcirc
