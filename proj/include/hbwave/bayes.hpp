// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/core.hpp"
#include "hbwave/parallel.hpp"
#include "hbwave/unmix.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hbwave::bayes {

/// Where the fixed-point iteration starts: the expected spectrum of x = 0
/// (flat unit reflectance), or the Beer-Lambert fit of the Tikhonov estimate.
enum class Start { flat, tikhonov };

struct BayesConfig {
    double beta = 0.1;      // shape-prior weight
    int max_iters = 300;
    double rel_tol = 1e-4;  // on ‖Δx‖ / max(‖x‖, 1 g/litre)
    double epsilon = 1e-6;  // floor applied before every log
    int anderson_depth = 3;  // 0 = plain fixed-point iteration
    Start start = Start::flat;

    void validate() const {
        if (!(beta > 0.0) || !std::isfinite(beta)) throw ArgumentError("bayes: beta must be > 0");
        if (max_iters < 1) throw ArgumentError("bayes: max_iters must be >= 1");
        if (!(rel_tol > 0.0)) throw ArgumentError("bayes: rel_tol must be > 0");
        if (anderson_depth < 0 || anderson_depth > 8)
            throw ArgumentError("bayes: anderson_depth must lie in [0, 8]");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw ArgumentError("bayes: epsilon must lie in (0, 1)");
    }
};

// ---------------------------------------------------------------------------
// Beer-Lambert fit
// ---------------------------------------------------------------------------

/// x̂ = -(ξᵀξ)⁻¹ξᵀ log(max(I, ε)).
class ConcentrationFitter {
public:
    explicit ConcentrationFitter(const ChromophoreBasis& basis) : basis_(basis) {
        const Matrix& xi = basis.matrix();
        Eigen::ColPivHouseholderQR<Matrix> qr(xi);
        qr.setThreshold(1e-12);
        if (qr.rank() < 3)
            throw SingularOperatorError("fit_concentration: ξᵀξ is singular (rank " +
                                        std::to_string(qr.rank()) + ")");
        projection_ = qr.solve(Matrix::Identity(xi.rows(), xi.rows()));
    }

    const ChromophoreBasis& basis() const noexcept { return basis_; }
    const Matrix& projection() const noexcept { return projection_; }
    int bands() const noexcept { return static_cast<int>(projection_.cols()); }

    Vector3 fit(const double* spectrum, double epsilon) const noexcept {
        Vector3 x = Vector3::Zero();
        for (int l = 0; l < bands(); ++l)
            x.noalias() -= projection_.col(l) * std::log(std::max(spectrum[l], epsilon));
        return x;
    }
    Vector3 fit(const Vector& spectrum, double epsilon) const {
        if (spectrum.size() != bands())
            throw ArgumentError("fit_concentration: spectrum length does not match basis");
        return fit(spectrum.data(), epsilon);
    }

    ConcentrationMap fit_image(const Image& cube, double epsilon, int threads = 1) const {
        if (cube.channels() != bands())
            throw GridMismatchError("fit_concentration: cube has " +
                                    std::to_string(cube.channels()) + " bands, basis has " +
                                    std::to_string(bands()));
        ConcentrationMap out(cube.rows(), cube.cols());
        parallel_for(cube.pixels(), threads, [&](std::size_t b, std::size_t e, int) {
            for (std::size_t i = b; i < e; ++i) {
                const Vector3 x = fit(cube.pixel(i), epsilon);
                std::copy(x.data(), x.data() + 3, out.pixel(i));
            }
        });
        return out;
    }

private:
    ChromophoreBasis basis_;
    Matrix projection_;  // 3 x L
};

inline Vector3 fit_concentration(const Vector& spectrum, const ChromophoreBasis& basis,
                                 double epsilon = BayesConfig{}.epsilon) {
    return ConcentrationFitter(basis).fit(spectrum, epsilon);
}

/// E[I] = exp(-ξx).
inline Vector expected_spectrum(const Vector3& x, const ChromophoreBasis& basis) {
    return (-(basis.matrix() * x)).array().exp().matrix();
}

// ---------------------------------------------------------------------------
// Expectation step
// ---------------------------------------------------------------------------

/// Minimises ‖C Î - y‖² + β ‖D₂ (Î/E - 1)‖² over Î, i.e. the second
/// difference of the estimate relative to the expected spectrum is pulled to
/// zero. Writing Î = E∘(1+u) and u = Φa + Ψv, with Φ = [1, k] spanning null(D₂)
/// and Ψ the double-cumulative-sum right inverse of D₂, the problem becomes
///   min ‖F a + B v - r‖² + β‖v‖²,   F = C_E Φ, B = C_E Ψ, r = y - C E,
/// whose v-part is eliminated through the 3x3 matrix S = (βI + BBᵀ)⁻¹. Every
/// step is O(L).
class ShapePriorSolver {
public:
    struct Status {
        bool ok = true;
        double condition = 1.0;
    };

    /// Per-worker scratch.
    struct Workspace {
        std::vector<double> w;  // 3 x L row-major, C_E
        std::vector<double> b;  // 3 x (L-2), C_E Ψ
    };

    ShapePriorSolver(const CameraSensitivity& s, double beta)
        : c_(s.matrix()), bands_(s.grid().size()), beta_(beta) {
        if (!(beta > 0.0) || !std::isfinite(beta))
            throw ArgumentError("expectation_step: beta must be > 0");
    }

    int bands() const noexcept { return bands_; }
    double beta() const noexcept { return beta_; }

    Workspace make_workspace() const {
        Workspace ws;
        ws.w.resize(static_cast<std::size_t>(3 * bands_));
        ws.b.resize(static_cast<std::size_t>(3 * (bands_ - 2)));
        return ws;
    }

    /// Writes Î to `out`; `out` may alias `expected`.
    Status solve(const Vector3& y, const double* expected, double* out, Workspace& ws) const {
        const int L = bands_;
        const int M = L - 2;
        double* w = ws.w.data();
        double* b = ws.b.data();

        Eigen::Matrix<double, 3, 2> f;
        for (int i = 0; i < 3; ++i) {
            double s0 = 0.0, s1 = 0.0;
            double* wi = w + i * L;
            for (int l = 0; l < L; ++l) {
                wi[l] = c_(i, l) * expected[l];
                s0 += wi[l];
                s1 += l * wi[l];
            }
            f(i, 0) = s0;
            f(i, 1) = s1;
            // B_j = U_{j+2}, U_k = Σ_{k'>=k} T_{k'}, T_k = Σ_{m>=k} w_m.
            double t = 0.0, u = 0.0;
            double* bi = b + i * M;
            for (int k = L - 1; k >= 2; --k) {
                t += wi[k];
                u += t;
                bi[k - 2] = u;
            }
        }

        Matrix3 g = Matrix3::Zero();
        for (int j = 0; j < M; ++j) {
            const Vector3 col(b[j], b[M + j], b[2 * M + j]);
            g.noalias() += col * col.transpose();
        }
        g.diagonal().array() += beta_;
        const Matrix3 s = g.inverse();

        const Vector3 r = y - f.col(0);
        const Eigen::Matrix2d fsf = f.transpose() * s * f;
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(fsf, Eigen::EigenvaluesOnly);
        const double lmax = eig.eigenvalues()(1), lmin = eig.eigenvalues()(0);
        Status st;
        st.condition = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
        if (!(lmin > 1e-13 * lmax) || !std::isfinite(lmax)) {
            st.ok = false;
            return st;
        }
        const Eigen::Vector2d a = fsf.ldlt().solve(f.transpose() * (s * r));
        const Vector3 sres = s * (r - f * a);

        // u = Φa + Ψv, (Ψv)_m = Σ_{k<=m-2} Σ_{j<=k} v_j
        double p1 = 0.0, p2 = 0.0;
        for (int m = 0; m < L; ++m) {
            const double u = a(0) + a(1) * m + p2;
            out[m] = expected[m] * (1.0 + u);
            if (m >= 1 && m - 1 < M) {
                const int j = m - 1;
                p1 += b[j] * sres(0) + b[M + j] * sres(1) + b[2 * M + j] * sres(2);
                p2 += p1;
            }
        }
        return st;
    }

private:
    Matrix c_;
    int bands_;
    double beta_;
};

inline Vector expectation_step(const Vector3& rgb_lp, const Vector& e_spectrum,
                               const CameraSensitivity& s, const BayesConfig& cfg) {
    cfg.validate();
    if (e_spectrum.size() != s.grid().size())
        throw GridMismatchError("expectation_step: spectrum length does not match sensitivity");
    ShapePriorSolver solver(s, cfg.beta);
    auto ws = solver.make_workspace();
    Vector out(e_spectrum.size());
    const auto st = solver.solve(rgb_lp, e_spectrum.data(), out.data(), ws);
    if (!st.ok)
        throw IllConditionedPriorError(
            "expectation_step: shape-prior normal matrix is numerically singular (condition " +
                std::to_string(st.condition) + ")",
            st.condition);
    return out;
}

// ---------------------------------------------------------------------------
// Low-pass estimator
// ---------------------------------------------------------------------------

/// Low-pass Haar coefficients of an RGB frame and the accumulated gain (2ⁿ).
struct LowPassBlock {
    Image rgb_lp;
    double scale = 1.0;

    LowPassBlock(Image lp, double gain) : rgb_lp(std::move(lp)), scale(gain) {
        if (rgb_lp.channels() != 3) throw ArgumentError("low-pass block must have 3 channels");
        if (!(scale > 0.0)) throw ArgumentError("low-pass block scale must be > 0");
        for (double v : rgb_lp.data())
            if (!(v >= 0.0) || !std::isfinite(v))
                throw ArgumentError("low-pass coefficients must be finite and >= 0");
    }
};

struct PixelResult {
    Vector3 x = Vector3::Zero();
    int iterations = 0;
    bool converged = false;
    bool stalled = false;  // expectation step became ill-conditioned
};

struct LowPassStats {
    std::size_t coefficients = 0;
    std::size_t total_iterations = 0;
    int max_iterations_used = 0;
    std::size_t unconverged = 0;
    std::size_t stalled = 0;

    void merge(const LowPassStats& o) {
        coefficients += o.coefficients;
        total_iterations += o.total_iterations;
        max_iterations_used = std::max(max_iterations_used, o.max_iterations_used);
        unconverged += o.unconverged;
        stalled += o.stalled;
    }
};

struct LowPassEstimate {
    Image spectra;  // scaled back by the block gain
    ConcentrationMap concentrations;
    LowPassStats stats;
};

/// Alternates the Beer-Lambert fit with the shape-prior expectation step,
/// starting from a flat spectrum (or the Tikhonov estimate, see `Start`).
/// Immutable; shareable across threads.
class BayesEstimator {
public:
    BayesEstimator(const CameraSensitivity& s, const ChromophoreBasis& basis,
                   const BayesConfig& cfg, unmix::TikhonovOperator init)
        : cfg_(cfg), fitter_(basis), solver_(s, cfg.beta), init_(std::move(init)) {
        cfg.validate();
        require_same_grid(s.grid(), basis.grid(), "bayes");
        require_same_grid(s.grid(), init_.sensitivity().grid(), "bayes");
    }

    /// Longest accepted extrapolation, in units of the plain step.
    static constexpr double kMaxExtrapolation = 20.0;

    const BayesConfig& config() const noexcept { return cfg_; }
    const ConcentrationFitter& fitter() const noexcept { return fitter_; }
    int bands() const noexcept { return fitter_.bands(); }

    struct Workspace {
        ShapePriorSolver::Workspace prior;
        Vector expected;
    };
    Workspace make_workspace() const { return {solver_.make_workspace(), Vector(bands())}; }

    /// `spectrum` receives the final estimate (length L).
    PixelResult estimate_pixel(const Vector3& y, double* spectrum, Workspace& ws) const {
        const int L = bands();
        const double eps = cfg_.epsilon;
        const Matrix& xi = fitter_.basis().matrix();
        Eigen::Map<Vector> est(spectrum, L);
        PixelResult res;
        if (y.isZero(0.0)) {
            // dark coefficient: zero spectrum, concentrations of the clamped floor
            est.setZero();
            res.x = fitter_.fit(spectrum, eps);
            res.converged = true;
            return res;
        }
        Vector3 x = Vector3::Zero();
        if (cfg_.start == Start::tikhonov) {
            est.noalias() = init_.solve() * y;
            est = est.cwiseMax(eps);
            x = fitter_.fit(spectrum, eps);
        }
        res.x = x;

        // Anderson mixing over the last `depth` iterates of x -> fit(step(x)),
        // restarted whenever the residual grows or an extrapolated point fails.
        const int depth = cfg_.anderson_depth;
        Eigen::Matrix<double, 3, Eigen::Dynamic> dg(3, std::max(depth, 1)),
            df(3, std::max(depth, 1));
        Vector3 g_prev = Vector3::Zero(), f_prev = Vector3::Zero();
        int stored = 0, head = 0;
        bool extrapolated = false;
        for (int it = 1; it <= cfg_.max_iters; ++it) {
            ws.expected.noalias() = -(xi * x);
            ws.expected = ws.expected.array().exp().matrix();
            const auto st = solver_.solve(y, ws.expected.data(), spectrum, ws.prior);
            res.iterations = it;
            if (!st.ok) {
                if (extrapolated) {
                    x = g_prev;
                    stored = 0;
                    extrapolated = false;
                    continue;
                }
                // keep the last well-defined estimate
                est = ws.expected;
                res.x = x;
                res.stalled = true;
                break;
            }
            est = est.cwiseMax(eps);
            const Vector3 g = fitter_.fit(spectrum, eps);
            const Vector3 f = g - x;
            res.x = g;
            if (f.norm() < cfg_.rel_tol * std::max(g.norm(), 1.0)) {
                res.converged = true;
                break;
            }
            if (depth == 0) {
                x = g;
                continue;
            }
            if (it > 1 && f.norm() < f_prev.norm()) {
                dg.col(head) = g - g_prev;
                df.col(head) = f - f_prev;
                head = (head + 1) % depth;
                stored = std::min(stored + 1, depth);
            } else {
                stored = 0;
                head = 0;
            }
            g_prev = g;
            f_prev = f;
            x = g;
            extrapolated = false;
            if (stored > 0) {
                const Vector gamma = df.leftCols(stored).colPivHouseholderQr().solve(f);
                const Vector3 step = -(dg.leftCols(stored) * gamma);
                if (step.allFinite() && step.norm() <= kMaxExtrapolation * f.norm()) {
                    x = g + step;
                    extrapolated = true;
                }
            }
        }
        return res;
    }

    LowPassEstimate estimate(const LowPassBlock& block, int threads = 1) const {
        const Image& lp = block.rgb_lp;
        LowPassEstimate out{Image(lp.rows(), lp.cols(), bands()),
                            ConcentrationMap(lp.rows(), lp.cols()), {}};
        const int workers = std::max(1, threads);
        std::vector<LowPassStats> partial(static_cast<std::size_t>(workers));
        const double inv = 1.0 / block.scale;
        parallel_for(lp.pixels(), threads, [&](std::size_t b, std::size_t e, int worker) {
            auto ws = make_workspace();
            LowPassStats& st = partial[static_cast<std::size_t>(worker)];
            for (std::size_t i = b; i < e; ++i) {
                const Vector3 y = Eigen::Map<const Vector3>(lp.pixel(i)) * inv;
                double* spec = out.spectra.pixel(i);
                const PixelResult r = estimate_pixel(y, spec, ws);
                for (int l = 0; l < bands(); ++l) spec[l] *= block.scale;
                std::copy(r.x.data(), r.x.data() + 3, out.concentrations.pixel(i));
                st.coefficients += 1;
                st.total_iterations += static_cast<std::size_t>(r.iterations);
                st.max_iterations_used = std::max(st.max_iterations_used, r.iterations);
                if (!r.converged) ++st.unconverged;
                if (r.stalled) ++st.stalled;
            }
        });
        for (const auto& p : partial) out.stats.merge(p);
        return out;
    }

private:
    BayesConfig cfg_;
    ConcentrationFitter fitter_;
    ShapePriorSolver solver_;
    unmix::TikhonovOperator init_;
};

inline LowPassEstimate estimate_lowpass(const LowPassBlock& block, const CameraSensitivity& s,
                                        const ChromophoreBasis& basis, const BayesConfig& cfg,
                                        const unmix::TikhonovOperator& init, int threads = 1) {
    return BayesEstimator(s, basis, cfg, init).estimate(block, threads);
}

}  // namespace hbwave::bayes
