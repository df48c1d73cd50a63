#include "qcirc/quantize.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "qcirc/constants.hpp"

namespace qcirc {

using cd = std::complex<double>;
using Triplets = std::vector<Eigen::Triplet<cd>>;

namespace {

SparseOp sparse_from_triplets(long rows, long cols, Triplets& t) {
    SparseOp m(rows, cols);
    m.setFromTriplets(t.begin(), t.end());
    m.makeCompressed();
    return m;
}

SparseOp sparse_identity(long n) {
    Triplets t;
    t.reserve(n);
    for (long i = 0; i < n; ++i) t.emplace_back(i, i, cd(1.0, 0.0));
    return sparse_from_triplets(n, n, t);
}

SparseOp sparse_scalar(long n, cd v) {
    Triplets t;
    for (long i = 0; i < n; ++i) t.emplace_back(i, i, v);
    return sparse_from_triplets(n, n, t);
}

SparseOp kron(const SparseOp& a, const SparseOp& b) {
    Triplets t;
    t.reserve(static_cast<std::size_t>(a.nonZeros()) * b.nonZeros());
    for (int ka = 0; ka < a.outerSize(); ++ka)
        for (SparseOp::InnerIterator ia(a, ka); ia; ++ia)
            for (int kb = 0; kb < b.outerSize(); ++kb)
                for (SparseOp::InnerIterator ib(b, kb); ib; ++ib)
                    t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                                   ia.value() * ib.value());
    return sparse_from_triplets(a.rows() * b.rows(), a.cols() * b.cols(), t);
}

SparseOp from_dense(const Eigen::MatrixXcd& d) {
    Triplets t;
    for (long j = 0; j < d.cols(); ++j)
        for (long i = 0; i < d.rows(); ++i)
            if (d(i, j) != cd(0.0, 0.0)) t.emplace_back(i, j, d(i, j));
    return sparse_from_triplets(d.rows(), d.cols(), t);
}

// --- charge basis (n integer in [-N, N]) -----------------------------------

SparseOp charge_n_op(int N, int power) {
    int dim = 2 * N + 1;
    Triplets t;
    for (int j = 0; j < dim; ++j) {
        double n = j - N;
        t.emplace_back(j, j, cd(power == 1 ? n : n * n, 0.0));
    }
    return sparse_from_triplets(dim, dim, t);
}

SparseOp charge_exp_in(int N, double theta) {  // exp(i theta n)
    int dim = 2 * N + 1;
    Triplets t;
    for (int j = 0; j < dim; ++j) {
        double n = j - N;
        t.emplace_back(j, j, std::polar(1.0, theta * n));
    }
    return sparse_from_triplets(dim, dim, t);
}

SparseOp charge_exp_ix(int N, long c) {  // exp(i c x): |n> -> |n + c>
    int dim = 2 * N + 1;
    Triplets t;
    for (int j = 0; j < dim; ++j) {
        long j2 = j + c;
        if (j2 >= 0 && j2 < dim) t.emplace_back(j2, j, cd(1.0, 0.0));
    }
    return sparse_from_triplets(dim, dim, t);
}

// --- oscillator basis -------------------------------------------------------
// x = x0 + s (c + c')/sqrt(2), n = (c - c')/(i sqrt(2) s), [x, n] = i.
// Quadratics use the exact truncation P f(x,n) P so that Rayleigh-Ritz
// monotonicity holds.

SparseOp osc_x_tilde(int N, double s) {
    Triplets t;
    double f = s / std::sqrt(2.0);
    for (int k = 0; k + 1 < N; ++k) {
        double v = f * std::sqrt(k + 1.0);
        t.emplace_back(k, k + 1, cd(v, 0.0));
        t.emplace_back(k + 1, k, cd(v, 0.0));
    }
    return sparse_from_triplets(N, N, t);
}

SparseOp osc_n(int N, double s) {
    Triplets t;
    double f = 1.0 / (std::sqrt(2.0) * s);
    for (int k = 0; k + 1 < N; ++k) {
        double v = f * std::sqrt(k + 1.0);
        t.emplace_back(k + 1, k, cd(0.0, v));   // <k+1| n |k> = i v
        t.emplace_back(k, k + 1, cd(0.0, -v));
    }
    return sparse_from_triplets(N, N, t);
}

SparseOp osc_x_tilde_sq(int N, double s) {
    // x~^2 = s^2 (2 c'c + 1 + c^2 + c'^2)/2, exact matrix elements.
    Triplets t;
    double h = s * s / 2.0;
    for (int k = 0; k < N; ++k) t.emplace_back(k, k, cd(h * (2.0 * k + 1.0), 0.0));
    for (int k = 0; k + 2 < N; ++k) {
        double v = h * std::sqrt((k + 1.0) * (k + 2.0));
        t.emplace_back(k, k + 2, cd(v, 0.0));
        t.emplace_back(k + 2, k, cd(v, 0.0));
    }
    return sparse_from_triplets(N, N, t);
}

SparseOp osc_n_sq(int N, double s) {
    // n^2 = (2 c'c + 1 - c^2 - c'^2)/(2 s^2).
    Triplets t;
    double h = 1.0 / (2.0 * s * s);
    for (int k = 0; k < N; ++k) t.emplace_back(k, k, cd(h * (2.0 * k + 1.0), 0.0));
    for (int k = 0; k + 2 < N; ++k) {
        double v = -h * std::sqrt((k + 1.0) * (k + 2.0));
        t.emplace_back(k, k + 2, cd(v, 0.0));
        t.emplace_back(k + 2, k, cd(v, 0.0));
    }
    return sparse_from_triplets(N, N, t);
}

/// Exact projected displacement D(beta) = exp(beta c' - conj(beta) c),
/// entries via scaled associated-Laguerre recurrence.
Eigen::MatrixXcd osc_displacement(int N, cd beta) {
    double z = std::norm(beta);
    Eigen::MatrixXcd out(N, N);
    if (z > 500.0) {
        // All entries are ~exp(-z/2): treat as numerically zero.
        out.setZero();
        return out;
    }
    if (z < 1e-300) return Eigen::MatrixXcd::Identity(N, N);
    for (int d = 0; d < N; ++d) {
        // pref = e^{-z/2} beta^d / sqrt(d!), evaluated in log space for |beta|.
        double logmag = -z / 2.0 + (d > 0 ? 0.5 * d * std::log(z) : 0.0) - 0.5 * std::lgamma(d + 1.0);
        cd dir(1.0, 0.0);
        if (d > 0) {
            cd unit = beta / std::abs(beta);
            dir = std::pow(unit, d);
        }
        cd pref = dir * std::exp(logmag);
        // B_k: scaled Laguerre, B_0 = 1;
        // sqrt((j+1)(j+d+1)) B_{j+1} = (2j+1+d-z) B_j - sqrt(j(j+d)) B_{j-1}.
        double bkm1 = 0.0, bk = 1.0;
        for (int k = 0; k + d < N; ++k) {
            cd entry = pref * bk;
            out(k + d, k) = entry;                                        // <k+d|D|k>
            out(k, k + d) = std::conj(entry) * (d % 2 == 0 ? 1.0 : -1.0); // D(-beta)^T symmetry
            double bkp1 =
                ((2.0 * k + 1.0 + d - z) * bk - std::sqrt(k * (k + (double)d)) * bkm1) /
                std::sqrt((k + 1.0) * (k + 1.0 + d));
            bkm1 = bk;
            bk = bkp1;
        }
    }
    return out;
}

// <m|D|k> for m<k equals <k|D|m> of D(-beta) conjugated appropriately:
// D(beta)^dagger = D(-beta), so <m|D(beta)|k> = conj(<k|D(-beta)|m>).
// With pref(-beta) = (-1)^d pref(beta) the relation above follows.

// --- flux grid ---------------------------------------------------------------

struct GridGeom {
    int dim;
    double h;
    double x0;      // grid contains x0 at index c
    int c;          // center index
    bool cyclic;
    double x(int j) const { return x0 + (j - c) * h; }
};

SparseOp grid_diag(const GridGeom& g, const std::function<double(double)>& f) {
    Triplets t;
    for (int j = 0; j < g.dim; ++j) t.emplace_back(j, j, cd(f(g.x(j)), 0.0));
    return sparse_from_triplets(g.dim, g.dim, t);
}

SparseOp grid_shift(const GridGeom& g, long k) {  // exp(i theta n) with theta = k h
    Triplets t;
    for (int j = 0; j < g.dim; ++j) {
        long j2 = j + k;  // psi'(x_j) = psi(x_{j+k})
        if (g.cyclic)
            j2 = ((j2 % g.dim) + g.dim) % g.dim;
        else if (j2 < 0 || j2 >= g.dim)
            continue;
        t.emplace_back(j, j2, cd(1.0, 0.0));
    }
    return sparse_from_triplets(g.dim, g.dim, t);
}

SparseOp grid_n(const GridGeom& g) {
    // n = -i d/dx, 4th-order central difference.
    const double c1 = 2.0 / 3.0, c2 = -1.0 / 12.0;
    Triplets t;
    auto put = [&](int i, long j, double v) {
        if (g.cyclic)
            j = ((j % g.dim) + g.dim) % g.dim;
        else if (j < 0 || j >= g.dim)
            return;
        t.emplace_back(i, j, cd(0.0, -v / g.h));
    };
    for (int j = 0; j < g.dim; ++j) {
        put(j, j + 1, c1);
        put(j, j - 1, -c1);
        put(j, j + 2, c2);
        put(j, j - 2, -c2);
    }
    return sparse_from_triplets(g.dim, g.dim, t);
}

SparseOp grid_n_sq(const GridGeom& g) {
    // n^2 = -d^2/dx^2, 4th-order central stencil.
    const double d0 = -5.0 / 2.0, d1 = 4.0 / 3.0, d2 = -1.0 / 12.0;
    Triplets t;
    auto put = [&](int i, long j, double v) {
        if (g.cyclic)
            j = ((j % g.dim) + g.dim) % g.dim;
        else if (j < 0 || j >= g.dim)
            return;
        t.emplace_back(i, j, cd(-v / (g.h * g.h), 0.0));
    };
    for (int j = 0; j < g.dim; ++j) {
        put(j, j, d0);
        put(j, j + 1, d1);
        put(j, j - 1, d1);
        put(j, j + 2, d2);
        put(j, j - 2, d2);
    }
    return sparse_from_triplets(g.dim, g.dim, t);
}

/// Plane-wave unitary and momentum values for functions of n on a cyclic grid.
void grid_momenta(const GridGeom& g, Eigen::MatrixXcd& u, std::vector<double>& kappa) {
    int N = g.dim;
    u.resize(N, N);
    kappa.resize(N);
    double dk = kTwoPi / (N * g.h);
    for (int jm = 0; jm < N; ++jm) {
        int idx = jm <= N / 2 ? jm : jm - N;
        kappa[jm] = dk * idx;
        for (int jp = 0; jp < N; ++jp)
            u(jp, jm) = std::polar(1.0 / std::sqrt(double(N)), kappa[jm] * g.x(jp));
    }
}

}  // namespace

std::string ModeBasis::describe() const {
    std::ostringstream out;
    switch (kind) {
        case Kind::Charge:
            out << "charge[N=" << charge_N << "]";
            break;
        case Kind::Oscillator:
            out << "oscillator[N=" << osc_N << "]";
            break;
        case Kind::FluxGrid:
            out << "fluxgrid[m=" << grid_m << ",N=" << dim << (cyclic ? ",cyclic" : "") << "]";
            break;
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Basis selection

namespace {

struct ModeProfile {
    bool has_charge_cos = false;
    bool has_flux_cos = false;
    bool implicit_charge = false;
    bool implicit_flux = false;
    bool quad_n = false;
    bool quad_x = false;
    std::vector<Rat> charge_cos_coeffs;
};

ModeProfile profile_mode(const EnergyExpr& h, int slot) {
    ModeProfile p;
    Var qv = pair_charge(slot), fv = pair_flux(slot);
    for (const auto& t : h.terms) {
        if (const auto* q = std::get_if<QuadraticTerm>(&t)) {
            if (q->a == qv && q->b == qv && q->coeff > 0) p.quad_n = true;
            if (q->a == fv && q->b == fv && q->coeff > 0) p.quad_x = true;
        } else if (const auto* c = std::get_if<CosineTerm>(&t)) {
            Rat qc = c->arg.coeff(qv);
            if (qc != 0) {
                p.has_charge_cos = true;
                p.charge_cos_coeffs.push_back(qc);
            }
            if (c->arg.coeff(fv) != 0) p.has_flux_cos = true;
        } else if (const auto* im = std::get_if<ImplicitTerm>(&t)) {
            for (Var v : im->cluster->external_vars()) {
                if (v == qv) p.implicit_charge = true;
                if (v == fv) p.implicit_flux = true;
            }
        }
    }
    return p;
}

}  // namespace

std::vector<ModeBasis> select_bases(const EnergyExpr& h, const ReducedSystem& rs,
                                    const QuantizeOptions& opt) {
    std::vector<ModeBasis> out;
    for (int mode = 0; mode < h.num_modes(); ++mode) {
        int slot = h.pair_slots[mode];
        ModeProfile p = profile_mode(h, slot);
        ModeBasis b;
        b.mode = mode;
        b.charge_N = opt.charge_N;
        b.osc_N = opt.osc_N;
        b.grid_m = opt.grid_m;

        if (rs.slot_info[slot].compact)
            b.kind = ModeBasis::Kind::Charge;
        else if (p.has_charge_cos || p.implicit_charge || p.implicit_flux)
            b.kind = ModeBasis::Kind::FluxGrid;
        else if (p.quad_n && p.quad_x)
            b.kind = ModeBasis::Kind::Oscillator;
        else
            b.kind = ModeBasis::Kind::FluxGrid;

        auto it = opt.overrides.find(h.pair_labels[mode]);
        if (it != opt.overrides.end()) {
            const auto& ov = it->second;
            if (ov.kind) {
                if (*ov.kind == ModeBasis::Kind::Charge && !rs.slot_info[slot].compact)
                    throw std::domain_error("basis override: pair '" + h.pair_labels[mode] +
                                            "' is not compact, charge basis is illegal");
                if (*ov.kind == ModeBasis::Kind::Oscillator && !(p.quad_n && p.quad_x))
                    throw std::domain_error("basis override: pair '" + h.pair_labels[mode] +
                                            "' lacks both quadratic terms for an oscillator basis");
                if (*ov.kind == ModeBasis::Kind::Oscillator && (p.implicit_charge || p.implicit_flux))
                    throw std::domain_error(
                        "basis override: implicit term on pair '" + h.pair_labels[mode] +
                        "' requires a diagonal representation; force FluxGrid instead");
                b.kind = *ov.kind;
            }
            if (ov.N) {
                b.charge_N = *ov.N;
                b.osc_N = *ov.N;
                b.grid_N = *ov.N;
            }
            if (ov.m) b.grid_m = *ov.m;
        } else if (b.kind == ModeBasis::Kind::FluxGrid) {
            b.grid_N = 0;  // auto window, bounded by opt.grid_N
        }
        out.push_back(b);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

struct ModeCoeffs {
    double a = 0;       // joules per n^2
    double bx = 0;      // joules per x^2 (x = 2 pi f)
    double lin_n = 0;   // joules per n (symbols resolved)
    double lin_x = 0;   // joules per x
    double a_eff = 0;   // includes charge-cosine curvature
    double bx_eff = 0;  // includes flux-cosine curvature
};

ModeCoeffs mode_coeffs(const EnergyExpr& h, int slot, const std::function<double(Var)>& symval) {
    ModeCoeffs mc;
    Var qv = pair_charge(slot), fv = pair_flux(slot);
    double ccos = 0, fcos = 0;
    for (const auto& t : h.terms) {
        if (const auto* q = std::get_if<QuadraticTerm>(&t)) {
            double c = rat_to_double(q->coeff);
            if (q->a == qv && q->b == qv) mc.a += c;
            else if (q->a == fv && q->b == fv) mc.bx += c / (kTwoPi * kTwoPi);
            else if (q->a == qv && q->b.kind == VarKind::Symbol) mc.lin_n += c * symval(q->b);
            else if (q->b == qv && q->a.kind == VarKind::Symbol) mc.lin_n += c * symval(q->a);
            else if (q->a == fv && q->b.kind == VarKind::Symbol) mc.lin_x += c * symval(q->b) / kTwoPi;
            else if (q->b == fv && q->a.kind == VarKind::Symbol) mc.lin_x += c * symval(q->a) / kTwoPi;
        } else if (const auto* l = std::get_if<LinearTerm>(&t)) {
            double c = rat_to_double(l->coeff);
            if (l->v == qv) mc.lin_n += c;
            if (l->v == fv) mc.lin_x += c / kTwoPi;
        } else if (const auto* c = std::get_if<CosineTerm>(&t)) {
            double qc = rat_to_double(c->arg.coeff(qv));
            double fc = rat_to_double(c->arg.coeff(fv));
            if (qc != 0) ccos += 0.5 * std::abs(c->amplitude) * (kTwoPi * qc) * (kTwoPi * qc);
            if (fc != 0) fcos += 0.5 * std::abs(c->amplitude) * fc * fc;
        }
    }
    mc.a_eff = mc.a > 0 ? mc.a : ccos;
    mc.bx_eff = mc.bx > 0 ? mc.bx : fcos;
    return mc;
}

/// Numeric curvature estimates through implicit clusters.
void add_implicit_curvature(const EnergyExpr& h, int slot, const std::function<double(Var)>& symval,
                            ModeCoeffs& mc) {
    Var qv = pair_charge(slot), fv = pair_flux(slot);
    for (const auto& t : h.terms) {
        const auto* im = std::get_if<ImplicitTerm>(&t);
        if (!im) continue;
        for (Var v : im->cluster->external_vars()) {
            if (v != qv && v != fv) continue;
            double delta = 1e-3;
            auto value_at = [&](double u) {
                return im->cluster->energy([&](Var w) -> double {
                    if (w == v) return u;
                    if (w.kind == VarKind::Symbol) return symval(w);
                    return 0.0;
                });
            };
            double curv = (value_at(delta) - 2.0 * value_at(0.0) + value_at(-delta)) / (delta * delta);
            if (v == qv) mc.a_eff = std::max(mc.a_eff, 0.5 * std::abs(curv));
            if (v == fv) mc.bx_eff = std::max(mc.bx_eff, 0.5 * std::abs(curv) / (kTwoPi * kTwoPi));
        }
    }
}

long lcm_long(long a, long b) { return a / std::gcd(a, b) * b; }

}  // namespace

AssembledOperator assemble(const EnergyExpr& h, const ReducedSystem& rs,
                           const std::vector<ModeBasis>& bases_in,
                           const std::map<std::string, double>& symbols) {
    const int nm = h.num_modes();
    if (static_cast<int>(bases_in.size()) != nm)
        throw std::invalid_argument("assemble: one basis per mode required");

    auto symval = [&](Var v) -> double {
        if (v.kind != VarKind::Symbol) throw std::logic_error("assemble: symbol lookup misuse");
        const std::string& name = h.symbols.names[v.index];
        auto it = symbols.find(name);
        if (it != symbols.end()) return it->second;
        if (h.symbols.defaults[v.index]) return *h.symbols.defaults[v.index];
        throw std::invalid_argument("assemble: unresolved symbol '" + name + "'");
    };

    AssembledOperator out;
    out.bases = bases_in;
    std::vector<GridGeom> geoms(nm);
    std::vector<ModeProfile> profiles(nm);
    std::vector<double> osc_s(nm, 1.0);

    // Geometry per mode.
    for (int mode = 0; mode < nm; ++mode) {
        int slot = h.pair_slots[mode];
        auto& b = out.bases[mode];
        profiles[mode] = profile_mode(h, slot);
        ModeCoeffs mc = mode_coeffs(h, slot, symval);
        add_implicit_curvature(h, slot, symval, mc);
        switch (b.kind) {
            case ModeBasis::Kind::Charge:
                b.dim = 2 * b.charge_N + 1;
                break;
            case ModeBasis::Kind::Oscillator: {
                if (mc.a <= 0 || mc.bx <= 0)
                    throw std::domain_error("assemble: oscillator basis on pair '" +
                                            h.pair_labels[mode] + "' without two quadratic terms");
                osc_s[mode] = std::pow(mc.a / mc.bx, 0.25);
                b.s = osc_s[mode];
                b.x0 = -mc.lin_x / (2.0 * mc.bx);
                b.dim = b.osc_N;
                break;
            }
            case ModeBasis::Kind::FluxGrid: {
                GridGeom g;
                g.cyclic = profiles[mode].has_charge_cos || profiles[mode].implicit_charge;
                // Resolution: at least four points per effective zero-point width.
                long m = b.grid_m;
                if (mc.a_eff > 0 && mc.bx_eff > 0) {
                    double s = std::pow(mc.a_eff / mc.bx_eff, 0.25);
                    while (kTwoPi / m > s / 4.0 && m < 16384) m *= 2;
                }
                // Charge cosines need integer site shifts: m divisible by all
                // coefficient denominators.
                for (const Rat& qc : profiles[mode].charge_cos_coeffs) {
                    long den = static_cast<long>(denominator(qc).convert_to<long long>());
                    m = lcm_long(m, den);
                    if (m > 16384)
                        throw std::domain_error(
                            "assemble: charge-cosine coefficients need a finer flux grid than "
                            "supported; adjust --grid-m");
                }
                g.h = kTwoPi / m;
                b.grid_m = static_cast<int>(m);
                g.x0 = mc.bx > 0 ? -mc.lin_x / (2.0 * mc.bx) : 0.0;
                double s_window = (mc.a_eff > 0 && mc.bx_eff > 0)
                                      ? std::pow(mc.a_eff / mc.bx_eff, 0.25)
                                      : 1.0;
                double whalf = std::max(6.0 * std::sqrt(3.0) * s_window, M_PI);
                if (profiles[mode].has_flux_cos) whalf = std::max(whalf, 3.0 * kTwoPi);
                if (b.grid_N > 0) {
                    g.dim = b.grid_N;
                    if (g.cyclic) {
                        long J = std::max<long>(1, (b.grid_N + m / 2) / m);
                        g.dim = static_cast<int>(J * m);
                    }
                } else if (g.cyclic) {
                    long J = std::max<long>(static_cast<long>(std::ceil(2.0 * whalf / kTwoPi)),
                                            mc.a > 0 ? 8 : 32);
                    long cap = std::max<long>(2048, 2 * m);
                    while (J > 2 && J * m > cap) --J;
                    g.dim = static_cast<int>(J * m);
                } else {
                    g.dim = 2 * static_cast<int>(std::ceil(whalf / g.h)) + 1;
                    g.dim = std::max(g.dim, 33);
                }
                g.c = g.dim / 2;
                geoms[mode] = g;
                b.dim = g.dim;
                b.cyclic = g.cyclic;
                b.x0 = g.x0;
                break;
            }
        }
    }

    long total_dim = 1;
    for (int mode = 0; mode < nm; ++mode) {
        total_dim *= out.bases[mode].dim;
        if (total_dim > 50'000'000) throw std::domain_error("assemble: tensor dimension too large");
    }
    if (nm == 0) total_dim = 1;
    out.dim = total_dim;

    // Per-mode primitive builders.
    auto op_n = [&](int mode) -> SparseOp {
        const auto& b = out.bases[mode];
        switch (b.kind) {
            case ModeBasis::Kind::Charge: return charge_n_op(b.charge_N, 1);
            case ModeBasis::Kind::Oscillator: return osc_n(b.dim, osc_s[mode]);
            case ModeBasis::Kind::FluxGrid: return grid_n(geoms[mode]);
        }
        throw std::logic_error("op_n");
    };
    auto op_n2 = [&](int mode) -> SparseOp {
        const auto& b = out.bases[mode];
        switch (b.kind) {
            case ModeBasis::Kind::Charge: return charge_n_op(b.charge_N, 2);
            case ModeBasis::Kind::Oscillator: return osc_n_sq(b.dim, osc_s[mode]);
            case ModeBasis::Kind::FluxGrid: return grid_n_sq(geoms[mode]);
        }
        throw std::logic_error("op_n2");
    };
    auto op_x = [&](int mode) -> SparseOp {  // full x = x0 + x~
        const auto& b = out.bases[mode];
        switch (b.kind) {
            case ModeBasis::Kind::Charge:
                throw std::domain_error("assemble: quadratic/linear flux term on compact pair '" +
                                        h.pair_labels[mode] + "'");
            case ModeBasis::Kind::Oscillator: {
                SparseOp x = osc_x_tilde(b.dim, osc_s[mode]);
                if (b.x0 != 0.0) x = (x + sparse_scalar(b.dim, cd(b.x0, 0.0))).eval();
                return x;
            }
            case ModeBasis::Kind::FluxGrid:
                return grid_diag(geoms[mode], [](double x) { return x; });
        }
        throw std::logic_error("op_x");
    };
    auto op_x2 = [&](int mode) -> SparseOp {
        const auto& b = out.bases[mode];
        switch (b.kind) {
            case ModeBasis::Kind::Charge:
                throw std::domain_error("assemble: quadratic flux term on compact pair '" +
                                        h.pair_labels[mode] + "'");
            case ModeBasis::Kind::Oscillator: {
                SparseOp x2 = osc_x_tilde_sq(b.dim, osc_s[mode]);
                if (b.x0 != 0.0) {
                    SparseOp x1 = osc_x_tilde(b.dim, osc_s[mode]);
                    x2 = (x2 + 2.0 * b.x0 * x1 + sparse_scalar(b.dim, cd(b.x0 * b.x0, 0.0))).eval();
                }
                return x2;
            }
            case ModeBasis::Kind::FluxGrid:
                return grid_diag(geoms[mode], [](double x) { return x * x; });
        }
        throw std::logic_error("op_x2");
    };
    /// exp(i c x) and exp(i theta n) factors for cosine assembly.
    auto op_exp_ix = [&](int mode, double c) -> SparseOp {
        const auto& b = out.bases[mode];
        switch (b.kind) {
            case ModeBasis::Kind::Charge: {
                double ci = std::round(c);
                if (std::abs(c - ci) > 1e-9)
                    throw std::domain_error("assemble: non-integer flux-cosine coefficient on "
                                            "compact pair '" + h.pair_labels[mode] + "'");
                return charge_exp_ix(b.charge_N, static_cast<long>(ci));
            }
            case ModeBasis::Kind::Oscillator: {
                double lam = c * osc_s[mode] / std::sqrt(2.0);
                Eigen::MatrixXcd d = osc_displacement(b.dim, cd(0.0, lam));
                return from_dense((std::polar(1.0, c * b.x0) * d).eval());
            }
            case ModeBasis::Kind::FluxGrid: {
                Triplets t;
                const auto& g = geoms[mode];
                for (int j = 0; j < g.dim; ++j) t.emplace_back(j, j, std::polar(1.0, c * g.x(j)));
                return sparse_from_triplets(g.dim, g.dim, t);
            }
        }
        throw std::logic_error("op_exp_ix");
    };
    auto op_exp_in = [&](int mode, double theta) -> SparseOp {
        const auto& b = out.bases[mode];
        switch (b.kind) {
            case ModeBasis::Kind::Charge:
                return charge_exp_in(b.charge_N, theta);
            case ModeBasis::Kind::Oscillator: {
                double beta = -theta / (std::sqrt(2.0) * osc_s[mode]);
                return from_dense(osc_displacement(b.dim, cd(beta, 0.0)));
            }
            case ModeBasis::Kind::FluxGrid: {
                const auto& g = geoms[mode];
                double sites = theta / g.h;
                double si = std::round(sites);
                if (std::abs(sites - si) > 1e-9)
                    throw std::domain_error(
                        "assemble: charge-cosine shift is not an integer number of grid sites on "
                        "pair '" + h.pair_labels[mode] + "'; adjust --grid-m");
                return grid_shift(g, static_cast<long>(si));
            }
        }
        throw std::logic_error("op_exp_in");
    };

    auto embed = [&](int mode, const SparseOp& op) -> SparseOp {
        SparseOp total = sparse_identity(1);
        for (int i = 0; i < nm; ++i)
            total = kron(total, i == mode ? op : sparse_identity(out.bases[i].dim)).eval();
        return total;
    };
    auto embed_two = [&](int ma, const SparseOp& a, int mb, const SparseOp& b) -> SparseOp {
        SparseOp total = sparse_identity(1);
        for (int i = 0; i < nm; ++i) {
            if (i == ma)
                total = kron(total, a).eval();
            else if (i == mb)
                total = kron(total, b).eval();
            else
                total = kron(total, sparse_identity(out.bases[i].dim)).eval();
        }
        return total;
    };

    SparseOp H(total_dim, total_dim);
    double const_energy = 0.0;

    auto var_mode = [&](Var v) { return h.mode_of_slot(v.index); };
    auto mode_linear_op = [&](Var v) -> SparseOp {
        int mode = var_mode(v);
        return v.kind == VarKind::PairCharge ? op_n(mode) : op_x(mode);
    };
    auto var_scale = [&](Var v) { return v.kind == VarKind::PairFlux ? 1.0 / kTwoPi : 1.0; };
    // IR flux variables are f = x/(2 pi); operators are built in x.

    for (const auto& t : h.terms) {
        if (const auto* q = std::get_if<QuadraticTerm>(&t)) {
            double coeff = rat_to_double(q->coeff);
            bool asym = q->a.kind == VarKind::Symbol, bsym = q->b.kind == VarKind::Symbol;
            if (asym && bsym) {
                const_energy += coeff * symval(q->a) * symval(q->b);
            } else if (asym || bsym) {
                Var v = asym ? q->b : q->a;
                double s = symval(asym ? q->a : q->b);
                H += (coeff * s * var_scale(v)) * embed(var_mode(v), mode_linear_op(v));
            } else if (q->a == q->b) {
                int mode = var_mode(q->a);
                SparseOp op = q->a.kind == VarKind::PairCharge ? op_n2(mode) : op_x2(mode);
                double s = var_scale(q->a);
                H += (coeff * s * s) * embed(mode, op);
            } else {
                int ma = var_mode(q->a), mb = var_mode(q->b);
                double s = var_scale(q->a) * var_scale(q->b);
                if (ma == mb) {
                    // Same mode, distinct vars would mix n and x: the IR never
                    // produces this (operator-ordering guard).
                    throw std::logic_error("assemble: mixed charge-flux quadratic on one mode");
                }
                H += (coeff * s) * embed_two(ma, mode_linear_op(q->a), mb, mode_linear_op(q->b));
            }
        } else if (const auto* l = std::get_if<LinearTerm>(&t)) {
            double coeff = rat_to_double(l->coeff);
            if (l->v.kind == VarKind::Symbol) {
                const_energy += coeff * symval(l->v);
            } else {
                H += (coeff * var_scale(l->v)) * embed(var_mode(l->v), mode_linear_op(l->v));
            }
        } else if (const auto* c = std::get_if<CosineTerm>(&t)) {
            double phase = rat_to_double(c->arg.constant()) * kTwoPi;
            SparseOp P = sparse_identity(1);
            bool any_op = false;
            for (int mode = 0; mode < nm; ++mode) {
                int slot = h.pair_slots[mode];
                Rat fc = c->arg.coeff(pair_flux(slot));
                Rat qc = c->arg.coeff(pair_charge(slot));
                if (fc != 0 && qc != 0)
                    throw std::logic_error("assemble: cosine mixes a pair's charge and flux");
                SparseOp factor = sparse_identity(out.bases[mode].dim);
                if (fc != 0) {
                    factor = op_exp_ix(mode, rat_to_double(fc));
                    any_op = true;
                } else if (qc != 0) {
                    factor = op_exp_in(mode, kTwoPi * rat_to_double(qc));
                    any_op = true;
                }
                P = kron(P, factor).eval();
            }
            for (const auto& [v, coef] : c->arg.coeffs())
                if (v.kind == VarKind::Symbol) phase += kTwoPi * rat_to_double(coef) * symval(v);
            if (!any_op) {
                const_energy += c->amplitude * std::cos(phase);
                continue;
            }
            SparseOp Pph = (std::polar(1.0, phase) * P).eval();
            SparseOp herm = (0.5 * c->amplitude) * (SparseOp(Pph) + SparseOp(Pph.adjoint()));
            H += herm;
        } else if (const auto* im = std::get_if<ImplicitTerm>(&t)) {
            // Involved modes and variable kinds.
            std::vector<Var> ext = im->cluster->external_vars();
            std::vector<int> flux_modes, charge_modes;
            for (Var v : ext) {
                if (v.kind == VarKind::PairFlux) flux_modes.push_back(var_mode(v));
                if (v.kind == VarKind::PairCharge) charge_modes.push_back(var_mode(v));
            }
            if (!flux_modes.empty() && !charge_modes.empty())
                throw std::logic_error("assemble: implicit term mixes charge and flux variables");
            auto require_grid = [&](int mode) {
                if (out.bases[mode].kind != ModeBasis::Kind::FluxGrid)
                    throw std::domain_error(
                        "assemble: implicit term variable is not diagonal in the selected basis of "
                        "pair '" + h.pair_labels[mode] + "'; force FluxGrid for it");
            };
            if (!flux_modes.empty()) {
                // Diagonal in position space of the involved grids.
                for (int m : flux_modes) require_grid(m);
                std::sort(flux_modes.begin(), flux_modes.end());
                flux_modes.erase(std::unique(flux_modes.begin(), flux_modes.end()), flux_modes.end());
                // Evaluate pointwise over the joint diagonal.
                std::vector<long> strides(nm, 1);
                for (int i = nm - 2; i >= 0; --i) strides[i] = strides[i + 1] * out.bases[i + 1].dim;
                Triplets trip;
                for (long idx = 0; idx < total_dim; ++idx) {
                    auto value = [&](Var v) -> double {
                        if (v.kind == VarKind::Symbol) return symval(v);
                        int mode = var_mode(v);
                        long j = (idx / strides[mode]) % out.bases[mode].dim;
                        return geoms[mode].x(static_cast<int>(j)) / kTwoPi;  // f units
                    };
                    trip.emplace_back(idx, idx, cd(im->cluster->energy(value), 0.0));
                }
                H += sparse_from_triplets(total_dim, total_dim, trip);
            } else {
                for (int m : charge_modes) require_grid(m);
                std::sort(charge_modes.begin(), charge_modes.end());
                charge_modes.erase(std::unique(charge_modes.begin(), charge_modes.end()),
                                   charge_modes.end());
                long joint = 1;
                for (int m : charge_modes) joint *= out.bases[m].dim;
                if (joint > 2048)
                    throw std::domain_error(
                        "assemble: implicit charge term spans a subspace too large for the "
                        "spectral (DFT) realization; reduce grid truncation");
                // V(n) is realized through the plane-wave unitaries of the
                // involved cyclic grids: V = U diag(V(kappa)) U^dagger.
                std::vector<Eigen::MatrixXcd> us(charge_modes.size());
                std::vector<std::vector<double>> ks(charge_modes.size());
                for (std::size_t i = 0; i < charge_modes.size(); ++i)
                    grid_momenta(geoms[charge_modes[i]], us[i], ks[i]);
                Eigen::MatrixXcd ujoint = Eigen::MatrixXcd::Ones(1, 1);
                for (const auto& u : us) {
                    Eigen::MatrixXcd next(ujoint.rows() * u.rows(), ujoint.cols() * u.cols());
                    for (long i = 0; i < ujoint.rows(); ++i)
                        for (long j = 0; j < ujoint.cols(); ++j)
                            next.block(i * u.rows(), j * u.cols(), u.rows(), u.cols()) =
                                ujoint(i, j) * u;
                    ujoint = std::move(next);
                }
                Eigen::VectorXd diag(joint);
                std::vector<long> jstrides(charge_modes.size(), 1);
                for (int i = static_cast<int>(charge_modes.size()) - 2; i >= 0; --i)
                    jstrides[i] = jstrides[i + 1] * out.bases[charge_modes[i + 1]].dim;
                for (long idx = 0; idx < joint; ++idx) {
                    auto value = [&](Var v) -> double {
                        if (v.kind == VarKind::Symbol) return symval(v);
                        int mode = var_mode(v);
                        for (std::size_t i = 0; i < charge_modes.size(); ++i)
                            if (charge_modes[i] == mode)
                                return ks[i][(idx / jstrides[i]) % out.bases[mode].dim];
                        return 0.0;
                    };
                    diag[idx] = im->cluster->energy(value);
                }
                Eigen::MatrixXcd vjoint = ujoint * diag.asDiagonal() * ujoint.adjoint();
                // Embed into the full tensor space.
                SparseOp vs = from_dense(vjoint);
                if (static_cast<long>(vjoint.rows()) == total_dim) {
                    H += vs;
                } else {
                    // Only supported when the involved modes are contiguous and
                    // the budget stays reasonable.
                    SparseOp total = sparse_identity(1);
                    int i = 0;
                    while (i < nm) {
                        if (std::find(charge_modes.begin(), charge_modes.end(), i) !=
                            charge_modes.end()) {
                            bool contiguous = true;
                            for (std::size_t kk = 0; kk < charge_modes.size(); ++kk)
                                if (charge_modes[kk] != i + static_cast<int>(kk)) contiguous = false;
                            if (!contiguous)
                                throw std::domain_error(
                                    "assemble: implicit charge term over non-adjacent modes is "
                                    "not supported");
                            total = kron(total, vs).eval();
                            i += static_cast<int>(charge_modes.size());
                        } else {
                            total = kron(total, sparse_identity(out.bases[i].dim)).eval();
                            ++i;
                        }
                    }
                    H += total;
                }
            }
        }
    }

    if (const_energy != 0.0) H += sparse_scalar(total_dim, cd(const_energy, 0.0));
    H.makeCompressed();

    // Hermiticity guard.
    {
        SparseOp diff = SparseOp(H.adjoint()) - H;
        double hn = std::sqrt(H.squaredNorm());
        double dn = std::sqrt(diff.squaredNorm());
        if (hn > 0 && dn > 1e-10 * hn)
            throw std::logic_error("assemble: operator is not Hermitian (internal error)");
    }

    // Caveat: commuting cosine pairs sample continuous bands.
    for (int mode = 0; mode < nm; ++mode) {
        const ModeProfile& p = profiles[mode];
        ModeCoeffs mc = mode_coeffs(h, h.pair_slots[mode], symval);
        if (p.has_charge_cos && p.has_flux_cos && mc.a == 0 && mc.bx == 0)
            out.caveats.push_back("pair '" + h.pair_labels[mode] +
                                  "': commuting charge/flux cosines form continuous bands; grid "
                                  "eigenvalues sample them");
    }

    out.matrix = std::move(H);
    return out;
}

// ---------------------------------------------------------------------------
// Eigensolvers

namespace {

bool sparse_is_real(const SparseOp& h) {
    for (int k = 0; k < h.outerSize(); ++k)
        for (SparseOp::InnerIterator it(h, k); it; ++it)
            if (std::abs(it.value().imag()) > 0.0) return false;
    return true;
}

}  // namespace

std::vector<double> lanczos_lowest(const SparseOp& h, int k) {
    const long dim = h.rows();
    k = std::min<long>(k, dim);
    const int max_basis = std::min<long>(dim, 220);
    const int keep = std::min<long>(std::max(2 * k + 12, 32), max_basis - 8);

    Eigen::MatrixXcd V(dim, max_basis + 1);
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(max_basis + 1, max_basis + 1);

    // Deterministic start vector.
    Eigen::VectorXcd v0(dim);
    for (long i = 0; i < dim; ++i) v0[i] = cd(std::sin(1.37 * (i + 1)) + 0.5, 0.0);
    v0.normalize();
    V.col(0) = v0;

    int nloc = 0;  // locked (thick-restart) vectors currently at the front
    int j = 0;     // current basis size - 1 index of the active Lanczos vector
    double hnorm = std::sqrt(h.squaredNorm());
    std::vector<double> result;

    for (int cycle = 0; cycle < 40; ++cycle) {
        // Expand with standard Lanczos from column nloc..max_basis-1.
        for (j = nloc; j < max_basis; ++j) {
            Eigen::VectorXcd w = h * V.col(j);
            // Project out all previous basis vectors (full reorthogonalization).
            for (int pass = 0; pass < 2; ++pass) {
                Eigen::VectorXcd coeffs = V.leftCols(j + 1).adjoint() * w;
                w -= V.leftCols(j + 1) * coeffs;
                if (pass == 0)
                    for (int i = 0; i <= j; ++i)
                        T(i, j) += coeffs[i].real(), T(j, i) = T(i, j);
            }
            double beta = w.norm();
            if (beta < 1e-14 * std::max(hnorm, 1.0)) {
                // Invariant subspace: diagonalize what we have.
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.topLeftCorner(j + 1, j + 1));
                auto ev = es.eigenvalues();
                for (int i = 0; i < std::min<long>(k, j + 1); ++i) result.push_back(ev[i]);
                return result;
            }
            T(j + 1, j) = T(j, j + 1) = beta;
            V.col(j + 1) = w / beta;
        }

        // Ritz values of the current projected matrix.
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T.topLeftCorner(max_basis, max_basis));
        Eigen::VectorXd theta = es.eigenvalues();
        Eigen::MatrixXd y = es.eigenvectors();
        double beta_m = T(max_basis, max_basis - 1);

        // Residual bounds |beta_m * y_last| for the k lowest.
        bool converged = true;
        for (int i = 0; i < k; ++i)
            if (std::abs(beta_m * y(max_basis - 1, i)) > 1e-10 * std::max(hnorm, 1.0))
                converged = false;
        if (converged || cycle == 39) {
            for (int i = 0; i < k; ++i) result.push_back(theta[i]);
            if (!converged)
                throw std::runtime_error("lanczos: eigensolver did not converge");
            return result;
        }

        // Thick restart: keep the lowest `keep` Ritz vectors plus the residual.
        Eigen::MatrixXcd newV(dim, max_basis + 1);
        newV.leftCols(keep) = V.leftCols(max_basis) * y.leftCols(keep);
        newV.col(keep) = V.col(max_basis);
        Eigen::MatrixXd newT = Eigen::MatrixXd::Zero(max_basis + 1, max_basis + 1);
        for (int i = 0; i < keep; ++i) {
            newT(i, i) = theta[i];
            newT(keep, i) = newT(i, keep) = beta_m * y(max_basis - 1, i);
        }
        V = std::move(newV);
        T = std::move(newT);
        nloc = keep;
    }
    throw std::runtime_error("lanczos: eigensolver did not converge");
}

SpectrumResult spectrum(const AssembledOperator& op, int k) {
    SpectrumResult res;
    res.requested_levels = k;
    for (const auto& b : op.bases) {
        res.truncations.push_back(b.dim);
        res.basis_desc.push_back(b.describe());
    }
    res.caveats = op.caveats;

    const long dim = op.dim;
    k = std::min<long>(k, dim);
    if (k <= 0) return res;

    if (dim <= 4096) {
        if (sparse_is_real(op.matrix)) {
            Eigen::MatrixXd d = Eigen::MatrixXd::Zero(dim, dim);
            for (int kk = 0; kk < op.matrix.outerSize(); ++kk)
                for (SparseOp::InnerIterator it(op.matrix, kk); it; ++it)
                    d(it.row(), it.col()) = it.value().real();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d, Eigen::EigenvaluesOnly);
            for (int i = 0; i < k; ++i) res.eigenvalues.push_back(es.eigenvalues()[i]);
        } else {
            Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(dim, dim);
            for (int kk = 0; kk < op.matrix.outerSize(); ++kk)
                for (SparseOp::InnerIterator it(op.matrix, kk); it; ++it) d(it.row(), it.col()) = it.value();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(d, Eigen::EigenvaluesOnly);
            for (int i = 0; i < k; ++i) res.eigenvalues.push_back(es.eigenvalues()[i]);
        }
    } else {
        res.eigenvalues = lanczos_lowest(op.matrix, k);
    }
    return res;
}

SpectrumResult compute_spectrum(const EnergyExpr& h, const ReducedSystem& rs,
                                const QuantizeOptions& opt,
                                const std::map<std::string, double>& symbols, int k) {
    auto bases = select_bases(h, rs, opt);
    auto op = assemble(h, rs, bases, symbols);
    SpectrumResult res = spectrum(op, k);
    res.parameters = symbols;
    for (std::size_t i = 0; i < h.symbols.names.size(); ++i)
        if (!res.parameters.count(h.symbols.names[i]) && h.symbols.defaults[i])
            res.parameters[h.symbols.names[i]] = *h.symbols.defaults[i];

    if (opt.check_convergence) {
        std::vector<ModeBasis> doubled = bases;
        for (auto& b : doubled) {
            b.charge_N *= 2;
            b.osc_N *= 2;
            if (b.kind == ModeBasis::Kind::FluxGrid) {
                b.grid_m = op.bases[b.mode].grid_m * 2;
                if (b.grid_N > 0) b.grid_N *= 2;
                else b.grid_N = op.bases[b.mode].dim * 2;
            }
        }
        auto op2 = assemble(h, rs, doubled, symbols);
        auto res2 = spectrum(op2, k);
        double worst = 0.0;
        for (std::size_t i = 0; i < res.eigenvalues.size() && i < res2.eigenvalues.size(); ++i)
            worst = std::max(worst, std::abs(res.eigenvalues[i] - res2.eigenvalues[i]));
        res.convergence_estimate = worst;
    }
    return res;
}

std::vector<SpectrumResult> sweep(const EnergyExpr& h, const ReducedSystem& rs,
                                  const QuantizeOptions& opt,
                                  const std::map<std::string, double>& symbols,
                                  const std::string& symbol, const std::vector<double>& values,
                                  int k) {
    if (h.symbols.index_of(symbol) < 0)
        throw std::invalid_argument("sweep: unknown symbol '" + symbol + "'");
    std::vector<SpectrumResult> out;
    for (double v : values) {
        auto syms = symbols;
        syms[symbol] = v;
        out.push_back(compute_spectrum(h, rs, opt, syms, k));
    }
    return out;
}

}  // namespace qcirc
