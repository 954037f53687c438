#include "matchfluct/field.hpp"

#include <fftw3.h>

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <ostream>

namespace matchfluct {

namespace {

constexpr double kPi = std::numbers::pi;

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

// In-place inverse DFT (exp(+i...)) of an n^d complex array, unnormalized.
void inverse_fft(std::vector<cplx>& data, int d, int n) {
    fftw_plan plan;
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        int dims[3] = {n, n, n};
        plan = fftw_plan_dft(d, dims, ptr, ptr, FFTW_BACKWARD, FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan);
}

std::size_t ipow(std::size_t b, int e) {
    std::size_t r = 1;
    for (int i = 0; i < e; ++i) r *= b;
    return r;
}

// Cubic Lagrange weights for nodes at offsets -1,0,1,2 from the base node.
void cubic_weights(double f, double w[4]) {
    w[0] = -f * (f - 1.0) * (f - 2.0) / 6.0;
    w[1] = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    w[2] = -(f + 1.0) * f * (f - 2.0) / 2.0;
    w[3] = (f + 1.0) * f * (f - 1.0) / 6.0;
}

double ewald_cut(double tol) { return std::sqrt(2.0 * std::log(1.0 / tol)) + 0.5; }

// Contract the last axis of `in` (shape dims) with E (dims.back() x np) and move the new axis first.
std::vector<cplx> contract_last(const std::vector<cplx>& in, std::vector<int>& dims, const std::vector<cplx>& E, int np) {
    int s = dims.back();
    std::size_t outer = in.size() / s;
    std::vector<cplx> out(static_cast<std::size_t>(np) * outer);
    for (std::size_t o = 0; o < outer; ++o) {
        const cplx* row = &in[o * s];
        for (int p = 0; p < np; ++p) {
            cplx acc = 0.0;
            const cplx* e = &E[static_cast<std::size_t>(p) * s];
            for (int j = 0; j < s; ++j) acc += row[j] * e[j];
            out[static_cast<std::size_t>(p) * outer + o] = acc;
        }
    }
    dims.pop_back();
    dims.insert(dims.begin(), np);
    return out;
}

void write_le(std::ostream& out, const void* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
        out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    } else {
        std::vector<char> b(static_cast<const char*>(p), static_cast<const char*>(p) + n);
        std::reverse(b.begin(), b.end());
        out.write(b.data(), static_cast<std::streamsize>(n));
    }
}

void read_le(std::istream& in, void* p, std::size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in) throw Error("truncated field dump");
    if constexpr (std::endian::native != std::endian::little) {
        auto* c = static_cast<char*>(p);
        std::reverse(c, c + n);
    }
}

}  // namespace

// ---------------------------------------------------------------- SpectralField

SpectralField::SpectralField(const TorusDomain& dom, int K) : dom_(dom), K_(K) {
    if (K < 0) throw UsageError("Fourier cutoff must be nonnegative");
    coef_.assign(ipow(2 * K + 1, dom.d), cplx(0.0, 0.0));
}

std::size_t SpectralField::index(const std::array<int, 3>& k) const {
    std::size_t idx = 0;
    for (int a = 0; a < dom_.d; ++a) idx = idx * side() + static_cast<std::size_t>(k[a] + K_);
    return idx;
}

std::array<int, 3> SpectralField::mode(std::size_t idx) const {
    std::array<int, 3> k{0, 0, 0};
    for (int a = dom_.d - 1; a >= 0; --a) {
        k[a] = static_cast<int>(idx % side()) - K_;
        idx /= side();
    }
    return k;
}

Vec SpectralField::wavevector(std::size_t idx) const {
    auto k = mode(idx);
    Vec v{0.0, 0.0, 0.0};
    for (int a = 0; a < dom_.d; ++a) v[a] = 2.0 * kPi * k[a] / dom_.L;
    return v;
}

bool SpectralField::mean_zero() const { return coef_.empty() || coef_[index({0, 0, 0})] == cplx(0.0, 0.0); }

double SpectralField::conjugate_asymmetry() const {
    double worst = 0.0;
    for (std::size_t i = 0; i < coef_.size(); ++i) {
        auto k = mode(i);
        std::array<int, 3> mk{-k[0], -k[1], -k[2]};
        worst = std::max(worst, std::abs(coef_[index(mk)] - std::conj(coef_[i])));
    }
    return worst;
}

double SpectralField::value(const Vec& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < coef_.size(); ++i) {
        Vec k = wavevector(i);
        s += (coef_[i] * std::polar(1.0, dot(k, x, dom_.d))).real();
    }
    return s;
}

double SpectralField::mollified_value(const Mollifier& m, double eps, const Vec& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < coef_.size(); ++i) {
        Vec k = wavevector(i);
        s += (coef_[i] * std::polar(1.0, dot(k, x, dom_.d))).real() * m.hat(k, eps);
    }
    return s;
}

double SpectralField::gradient_energy() const {
    double s = 0.0;
    for (std::size_t i = 0; i < coef_.size(); ++i) s += norm2(wavevector(i), dom_.d) * std::norm(coef_[i]);
    return s * dom_.volume();
}

SpectralField SpectralField::laplacian() const {
    SpectralField out(dom_, K_);
    for (std::size_t i = 0; i < coef_.size(); ++i) out.coef_[i] = -norm2(wavevector(i), dom_.d) * coef_[i];
    return out;
}

SpectralField SpectralField::translated(const Vec& a) const {
    SpectralField out(dom_, K_);
    for (std::size_t i = 0; i < coef_.size(); ++i) out.coef_[i] = coef_[i] * std::polar(1.0, -dot(wavevector(i), a, dom_.d));
    return out;
}

void SpectralField::dump(std::ostream& out) const {
    std::int32_t d = dom_.d, K = K_;
    double L = dom_.L;
    write_le(out, &d, 4);
    write_le(out, &L, 8);
    write_le(out, &K, 4);
    for (const auto& c : coef_) {
        double re = c.real(), im = c.imag();
        write_le(out, &re, 8);
        write_le(out, &im, 8);
    }
    if (!out) throw Error("failed writing field dump");
}

SpectralField SpectralField::load(std::istream& in) {
    std::int32_t d = 0, K = 0;
    double L = 0.0;
    read_le(in, &d, 4);
    read_le(in, &L, 8);
    read_le(in, &K, 4);
    if (d < 1 || d > 3 || !(L > 0.0) || K < 0 || K > 4096) throw Error("malformed field dump header");
    SpectralField u(TorusDomain(d, L), K);
    for (auto& c : u.coef_) {
        double re, im;
        read_le(in, &re, 8);
        read_le(in, &im, 8);
        c = cplx(re, im);
    }
    return u;
}

SpectralField atomic_fourier(const PointCloud& cloud, int K) {
    if (K < 1) throw UsageError("atomic_fourier needs K >= 1");
    const auto& dom = cloud.domain;
    const int d = dom.d, s = 2 * K + 1;
    SpectralField w(dom, K);
    const double pref = std::pow(cloud.R, 0.5 * d) * std::pow(cloud.R, -d) / dom.volume();
    std::vector<cplx> e(static_cast<std::size_t>(3) * s);
    auto& c = w.coefficients();
    for (const auto& X : cloud.points) {
        for (int a = 0; a < d; ++a) {
            double th = -2.0 * kPi * X[a] / dom.L;
            for (int j = 0; j < s; ++j) e[a * s + j] = std::polar(1.0, th * (j - K));
        }
        if (d == 1) {
            for (int i = 0; i < s; ++i) c[i] += e[i];
        } else if (d == 2) {
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j) c[i * s + j] += e[i] * e[s + j];
        } else {
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j) {
                    cplx ij = e[i] * e[s + j];
                    cplx* row = &c[(static_cast<std::size_t>(i) * s + j) * s];
                    for (int l = 0; l < s; ++l) row[l] += ij * e[2 * s + l];
                }
        }
    }
    for (auto& v : c) v *= pref;
    c[w.index({0, 0, 0})] = 0.0;
    return w;
}

SpectralField solve_poisson(const SpectralField& rhs) {
    const auto& c = rhs.coefficients();
    double scale = 0.0;
    for (const auto& v : c) scale = std::max(scale, std::abs(v));
    std::size_t zero = rhs.index({0, 0, 0});
    if (std::abs(c[zero]) > 1e-12 * std::max(scale, 1e-300) && std::abs(c[zero]) > 0.0)
        throw UsageError("Poisson right-hand side has a nonzero mean; incompatible on the torus");
    SpectralField u(rhs.domain(), rhs.cutoff());
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i == zero) continue;
        u[i] = -c[i] / norm2(rhs.wavevector(i), rhs.domain().d);
    }
    return u;
}

GradientValue grad_mollified(const SpectralField& u, const Mollifier& m, double eps, const Vec& x) {
    if (!(eps > 0.0)) throw UsageError("mollification scale must be positive");
    const int d = u.domain().d, K = u.cutoff();
    GradientValue g;
    double energy = 0.0, shell = 0.0;
    std::size_t shell_n = 0;
    for (std::size_t i = 0; i < u.mode_count(); ++i) {
        const cplx c = u[i];
        if (c == cplx(0.0, 0.0)) continue;
        Vec k = u.wavevector(i);
        double k2 = norm2(k, d);
        energy += k2 * std::norm(c);
        auto mk = u.mode(i);
        int inf = 0;
        for (int a = 0; a < d; ++a) inf = std::max(inf, std::abs(mk[a]));
        if (inf == K) {
            shell += k2 * std::norm(c);
            ++shell_n;
        }
        double w = m.hat_radial(std::sqrt(k2), eps);
        if (w == 0.0) continue;
        double im = (c * std::polar(1.0, dot(k, x, d))).imag();
        for (int a = 0; a < d; ++a) g.value[a] -= k[a] * im * w;
    }
    // Tail beyond the cube, assuming coefficients keep the size of the outer shell.
    if (shell_n > 0) {
        double amp = std::sqrt(shell / shell_n), tail = 0.0, dr = 0.25;
        const double om = Mollifier::sphere_area(d), kunit = 2.0 * kPi / u.domain().L;
        for (double r = K + 0.5 * dr; r * kunit * eps < m.hat_extent(); r += dr)
            tail += om * std::pow(r, d - 1) * std::abs(m.hat_radial(r * kunit, eps)) * dr;
        g.truncation_estimate = amp * tail;
        g.truncation_warning = g.truncation_estimate > 1e-8 * std::sqrt(energy);
    }
    return g;
}

Vec shift_u1_0(const SpectralField& u, const Mollifier& m) { return grad_mollified(u, m, 1.0, Vec{0.0, 0.0, 0.0}).value; }

std::vector<double> mollified_lattice_values(const SpectralField& u, const Mollifier& m, double eps, const Vec& origin,
                                             double spacing, const std::array<int, 3>& n) {
    const int d = u.domain().d, s = u.side(), K = u.cutoff();
    std::vector<cplx> a(u.mode_count());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = u[i] * m.hat(u.wavevector(i), eps);
    std::vector<int> dims(d, s);
    for (int axis = d - 1; axis >= 0; --axis) {
        std::vector<cplx> E(static_cast<std::size_t>(n[axis]) * s);
        for (int p = 0; p < n[axis]; ++p) {
            double xp = origin[axis] + p * spacing;
            for (int j = 0; j < s; ++j) E[static_cast<std::size_t>(p) * s + j] = std::polar(1.0, 2.0 * kPi * (j - K) * xp / u.domain().L);
        }
        a = contract_last(a, dims, E, n[axis]);
    }
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i].real();
    return out;
}

// ---------------------------------------------------------------- Green kernels

Vec green_gradient(const Vec& z, int d) {
    double r2 = norm2(z, d);
    Vec g{0.0, 0.0, 0.0};
    if (r2 == 0.0) return g;
    double r = std::sqrt(r2);
    double f = 1.0 / (Mollifier::sphere_area(d) * std::pow(r, d));
    for (int a = 0; a < d; ++a) g[a] = z[a] * f;
    return g;
}

double gaussian_ball_mass(double t, int d) {
    if (t <= 0.0) return 0.0;
    switch (d) {
        case 1: return std::erf(t / std::numbers::sqrt2);
        case 2: return -std::expm1(-0.5 * t * t);
        default:
            if (t < 1e-3) return std::sqrt(2.0 / kPi) * t * t * t / 3.0 * (1.0 - 0.3 * t * t);
            return std::erf(t / std::numbers::sqrt2) - std::sqrt(2.0 / kPi) * t * std::exp(-0.5 * t * t);
    }
}

const GreenCorrectionTable& GreenCorrectionTable::get(int d) {
    static std::once_flag flags[3];
    static std::unique_ptr<GreenCorrectionTable> inst[3];
    if (d < 1 || d > 3) throw UsageError("dimension must be 1, 2 or 3");
    std::call_once(flags[d - 1], [d] { inst[d - 1] = std::make_unique<GreenCorrectionTable>(d); });
    return *inst[d - 1];
}

GreenCorrectionTable::GreenCorrectionTable(int d) : d_(d) {
    if (d == 1) return;  // closed form: H(z) = -z / L
    n_ = d == 2 ? 256 : 96;
    stride_ = n_ + 5;
    const double sigma = d == 2 ? 0.015 : 0.04;
    const double cut = 8.5;
    const int n = n_;
    const std::size_t total = ipow(n, d);
    // spectral (Gaussian-screened) part on the periodic n^d grid, one component at a time
    std::vector<std::vector<double>> spec(d, std::vector<double>(total));
    for (int comp = 0; comp < d; ++comp) {
        std::vector<cplx> g(total, cplx(0.0, 0.0));
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t r = idx;
            int kk[3] = {0, 0, 0};
            for (int a = d - 1; a >= 0; --a) {
                int m = static_cast<int>(r % n);
                r /= n;
                kk[a] = m < n / 2 ? m : m - n;
            }
            double k2 = 0.0;
            for (int a = 0; a < d; ++a) k2 += std::pow(2.0 * kPi * kk[a], 2);
            if (k2 == 0.0 || std::sqrt(k2) * sigma > cut + 1.0) continue;
            g[idx] = cplx(0.0, -2.0 * kPi * kk[comp] / k2 * std::exp(-0.5 * sigma * sigma * k2));
        }
        inverse_fft(g, d, n);
        for (std::size_t idx = 0; idx < total; ++idx) spec[comp][idx] = g[idx].real();
    }
    const std::size_t nodes = ipow(stride_, d);
    data_.assign(nodes * d, 0.0);
    for (std::size_t node = 0; node < nodes; ++node) {
        std::size_t r = node;
        int ii[3] = {0, 0, 0};
        for (int a = d - 1; a >= 0; --a) {
            ii[a] = static_cast<int>(r % stride_);
            r /= stride_;
        }
        Vec z{0.0, 0.0, 0.0};
        std::size_t gidx = 0;
        for (int a = 0; a < d; ++a) {
            z[a] = -0.5 + static_cast<double>(ii[a] - 2) / n;
            int m = ((ii[a] - 2 - n / 2) % n + n) % n;
            gidx = gidx * n + m;
        }
        double* out = &data_[node * d];
        for (int a = 0; a < d; ++a) out[a] = spec[a][gidx];
        // real-space screened images
        int lim[3] = {0, 0, 0};
        for (int a = 0; a < d; ++a) lim[a] = 1;
        for (int n0 = -lim[0]; n0 <= lim[0]; ++n0)
            for (int n1 = -lim[1]; n1 <= lim[1]; ++n1)
                for (int n2 = -lim[2]; n2 <= lim[2]; ++n2) {
                    Vec w{z[0] + n0, z[1] + n1, z[2] + n2};
                    double rr = std::sqrt(norm2(w, d));
                    bool origin = n0 == 0 && n1 == 0 && n2 == 0;
                    Vec gg = green_gradient(w, d);
                    if (origin) {
                        double phi = gaussian_ball_mass(rr / sigma, d);
                        for (int a = 0; a < d; ++a) out[a] -= phi * gg[a];
                    } else if (rr < (cut + 1.0) * sigma) {
                        double q = 1.0 - gaussian_ball_mass(rr / sigma, d);
                        for (int a = 0; a < d; ++a) out[a] += q * gg[a];
                    }
                }
    }
}

Vec GreenCorrectionTable::eval(const Vec& z, double L) const {
    Vec h{0.0, 0.0, 0.0};
    if (d_ == 1) {
        h[0] = -z[0] / L;
        return h;
    }
    double w[3][4];
    int base[3] = {0, 0, 0};
    for (int a = 0; a < d_; ++a) {
        double p = (z[a] / L + 0.5) * n_ + 2.0;
        double fl = std::floor(p);
        int b = static_cast<int>(fl) - 1;
        b = std::clamp(b, 0, stride_ - 4);
        base[a] = b;
        cubic_weights(p - (b + 1), w[a]);
    }
    const double scale = std::pow(L, 1 - d_);
    if (d_ == 2) {
        for (int i = 0; i < 4; ++i) {
            const double* row = &data_[(static_cast<std::size_t>(base[0] + i) * stride_ + base[1]) * 2];
            double a0 = 0.0, a1 = 0.0;
            for (int j = 0; j < 4; ++j) {
                a0 += w[1][j] * row[2 * j];
                a1 += w[1][j] * row[2 * j + 1];
            }
            h[0] += w[0][i] * a0;
            h[1] += w[0][i] * a1;
        }
    } else {
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                const double* row =
                    &data_[((static_cast<std::size_t>(base[0] + i) * stride_ + base[1] + j) * stride_ + base[2]) * 3];
                double a0 = 0.0, a1 = 0.0, a2 = 0.0;
                for (int l = 0; l < 4; ++l) {
                    a0 += w[2][l] * row[3 * l];
                    a1 += w[2][l] * row[3 * l + 1];
                    a2 += w[2][l] * row[3 * l + 2];
                }
                double ww = w[0][i] * w[1][j];
                h[0] += ww * a0;
                h[1] += ww * a1;
                h[2] += ww * a2;
            }
    }
    for (int a = 0; a < d_; ++a) h[a] *= scale;
    return h;
}

// ---------------------------------------------------------------- AtomicPoisson

AtomicPoisson::AtomicPoisson(const PointCloud& cloud, double tol) : cloud_(&cloud), m_(&Mollifier::get(cloud.domain.d)) {
    cut_ = ewald_cut(tol);
    sigma_ = cloud.domain.L / 8.0;
}

void AtomicPoisson::build_modes() const {
    const auto& dom = cloud_->domain;
    const int d = dom.d;
    const double kmax = cut_ / sigma_;
    const int nmax = static_cast<int>(std::ceil(kmax * dom.L / (2.0 * kPi)));
    const double vol = dom.volume();
    // enumerate a half space of modes
    for (int a0 = -nmax; a0 <= nmax; ++a0)
        for (int a1 = (d > 1 ? -nmax : 0); a1 <= (d > 1 ? nmax : 0); ++a1)
            for (int a2 = (d > 2 ? -nmax : 0); a2 <= (d > 2 ? nmax : 0); ++a2) {
                int first = a0 != 0 ? a0 : (a1 != 0 ? a1 : a2);
                if (first <= 0) continue;
                Vec k{2.0 * kPi * a0 / dom.L, 2.0 * kPi * a1 / dom.L, 2.0 * kPi * a2 / dom.L};
                double k2 = norm2(k, d);
                if (std::sqrt(k2) > kmax) continue;
                kvec_.push_back(k);
            }
    kcoef_.assign(kvec_.size(), cplx(0.0, 0.0));
    for (const auto& X : cloud_->points)
        for (std::size_t i = 0; i < kvec_.size(); ++i) kcoef_[i] += std::polar(1.0, -dot(kvec_[i], X, d));
    for (std::size_t i = 0; i < kvec_.size(); ++i) {
        double k2 = norm2(kvec_[i], d);
        // factor 2 for the conjugate partner, -i for the gradient
        kcoef_[i] *= cplx(0.0, -2.0 * std::exp(-0.5 * sigma_ * sigma_ * k2) / (k2 * vol));
    }
}

Vec AtomicPoisson::grad(double eps, const Vec& x) const {
    if (!(eps > 0.0)) throw UsageError("mollification scale must be positive");
    std::call_once(modes_once_, [this] { build_modes(); });
    const auto& dom = cloud_->domain;
    const int d = dom.d;
    Vec g{0.0, 0.0, 0.0};
    const double rc = std::max(cut_ * sigma_, eps);
    const int nim = static_cast<int>(std::floor(rc / dom.L + 0.5 * std::sqrt(double(d)))) ;
    int lim[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) lim[a] = nim;
    for (const auto& X : cloud_->points) {
        Vec z = min_image(x, X, dom);
        for (int n0 = -lim[0]; n0 <= lim[0]; ++n0)
            for (int n1 = -lim[1]; n1 <= lim[1]; ++n1)
                for (int n2 = -lim[2]; n2 <= lim[2]; ++n2) {
                    Vec w{z[0] + n0 * dom.L, z[1] + n1 * dom.L, z[2] + n2 * dom.L};
                    double r = std::sqrt(norm2(w, d));
                    if (r >= rc || r == 0.0) continue;
                    double q = m_->mass(r / eps) - gaussian_ball_mass(r / sigma_, d);
                    if (q == 0.0) continue;
                    Vec gg = green_gradient(w, d);
                    for (int a = 0; a < d; ++a) g[a] += q * gg[a];
                }
    }
    for (std::size_t i = 0; i < kvec_.size(); ++i) {
        double re = (kcoef_[i] * std::polar(1.0, dot(kvec_[i], x, d))).real();
        for (int a = 0; a < d; ++a) g[a] += kvec_[i][a] * re;
    }
    double w = std::pow(cloud_->R, -0.5 * d);
    for (int a = 0; a < d; ++a) g[a] *= w;
    return g;
}

Vec AtomicPoisson::kernel_fast(const Mollifier& m, const TorusDomain& dom, double eps, const Vec& z) {
    const int d = dom.d;
    Vec zw = wrap(z, dom);
    Vec h = GreenCorrectionTable::get(d).eval(zw, dom.L);
    double r = std::sqrt(norm2(zw, d));
    if (r > 0.0) {
        double q = m.mass(r / eps);
        Vec gg = green_gradient(zw, d);
        for (int a = 0; a < d; ++a) h[a] += q * gg[a];
    }
    return h;
}

Vec AtomicPoisson::grad_fast(double eps, const Vec& x) const {
    const auto& dom = cloud_->domain;
    if (!(eps > 0.0)) throw UsageError("mollification scale must be positive");
    if (eps >= 0.5 * dom.L) return grad(eps, x);
    return grad_fast_multi({eps}, x)[0];
}

std::vector<Vec> AtomicPoisson::grad_fast_multi(const std::vector<double>& eps, const Vec& x) const {
    const auto& dom = cloud_->domain;
    const int d = dom.d;
    const auto& table = GreenCorrectionTable::get(d);
    std::vector<Vec> out(eps.size(), Vec{0.0, 0.0, 0.0});
    for (double e : eps)
        if (!(e > 0.0) || e >= 0.5 * dom.L) throw UsageError("kernel-table evaluation needs 0 < eps < L/2");
    Vec hs{0.0, 0.0, 0.0};
    for (const auto& X : cloud_->points) {
        Vec z = min_image(x, X, dom);
        Vec h = table.eval(z, dom.L);
        for (int a = 0; a < d; ++a) hs[a] += h[a];
        double r = std::sqrt(norm2(z, d));
        if (r == 0.0) continue;
        Vec gg = green_gradient(z, d);
        for (std::size_t s = 0; s < eps.size(); ++s) {
            double q = r < eps[s] ? m_->mass(r / eps[s]) : 1.0;
            for (int a = 0; a < d; ++a) out[s][a] += q * gg[a];
        }
    }
    double w = std::pow(cloud_->R, -0.5 * d);
    for (auto& g : out)
        for (int a = 0; a < d; ++a) g[a] = (g[a] + hs[a]) * w;
    return out;
}

// ---------------------------------------------------------------- TorusGridSolver

TorusGridSolver::TorusGridSolver(const PointCloud& cloud, int n, double max_eps, double tol)
    : cloud_(&cloud), m_(&Mollifier::get(cloud.domain.d)), d_(cloud.domain.d), n_(n), max_eps_(max_eps) {
    const auto& dom = cloud.domain;
    const double L = dom.L;
    if (n < 8 || n % 2 != 0) throw UsageError("torus grid needs an even node count >= 8");
    h_ = L / n;
    const double cut = ewald_cut(tol);
    const int kg = n / 2 - 1;
    sigma_ = cut * L / (2.0 * kPi * kg);
    const double rc = std::max(cut * sigma_, max_eps);
    if (rc > 0.5 * L) throw UsageError("torus grid too coarse for this cell; increase n or L");
    const int d = d_;
    const std::size_t total = ipow(n, d);
    raw_.assign(total * 3, 0.0);

    // structure factor on the cube of modes |k_a| <= kg, then the screened spectral field by FFT
    const int s = 2 * kg + 1;
    std::vector<cplx> S(ipow(s, d), cplx(0.0, 0.0));
    std::vector<cplx> e(static_cast<std::size_t>(3) * s);
    for (const auto& X : cloud.points) {
        for (int a = 0; a < d; ++a) {
            double th = -2.0 * kPi * X[a] / L;
            for (int j = 0; j < s; ++j) e[a * s + j] = std::polar(1.0, th * (j - kg));
        }
        if (d == 1) {
            for (int i = 0; i < s; ++i) S[i] += e[i];
        } else if (d == 2) {
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j) S[i * s + j] += e[i] * e[s + j];
        } else {
            for (int i = 0; i < s; ++i)
                for (int j = 0; j < s; ++j) {
                    cplx ij = e[i] * e[s + j];
                    cplx* row = &S[(static_cast<std::size_t>(i) * s + j) * s];
                    for (int l = 0; l < s; ++l) row[l] += ij * e[2 * s + l];
                }
        }
    }
    const double vol = dom.volume();
    for (int comp = 0; comp < d; ++comp) {
        std::vector<cplx> g(total, cplx(0.0, 0.0));
        for (std::size_t mi = 0; mi < S.size(); ++mi) {
            std::size_t r = mi;
            int kk[3] = {0, 0, 0};
            for (int a = d - 1; a >= 0; --a) {
                kk[a] = static_cast<int>(r % s) - kg;
                r /= s;
            }
            double k2 = 0.0;
            for (int a = 0; a < d; ++a) k2 += std::pow(2.0 * kPi * kk[a] / L, 2);
            if (k2 == 0.0) continue;
            // node i sits at -L/2 + i h, so fold the phase exp(-i k L/2) into the coefficient
            double phase = 0.0;
            for (int a = 0; a < d; ++a) phase -= kPi * kk[a];
            cplx c = cplx(0.0, -2.0 * kPi * kk[comp] / L / k2) * std::exp(-0.5 * sigma_ * sigma_ * k2) / vol * S[mi] *
                     std::polar(1.0, phase);
            std::size_t gi = 0;
            for (int a = 0; a < d; ++a) gi = gi * n + static_cast<std::size_t>((kk[a] + n) % n);
            g[gi] = c;
        }
        inverse_fft(g, d, n);
        for (std::size_t idx = 0; idx < total; ++idx) raw_[3 * idx + comp] = g[idx].real();
    }

    // atom buckets with side at least max_eps / 2
    nb_ = std::max(1, static_cast<int>(std::floor(L / std::max(0.5 * max_eps, 1e-9))));
    nb_ = std::min(nb_, 256);
    bside_ = L / nb_;
    const std::size_t nbuck = ipow(nb_, d);
    std::vector<std::size_t> cnt(nbuck + 1, 0);
    auto bucket_of = [&](const Vec& X) {
        std::size_t b = 0;
        for (int a = 0; a < d; ++a) {
            int i = static_cast<int>(std::floor((X[a] + 0.5 * L) / bside_));
            i = std::clamp(i, 0, nb_ - 1);
            b = b * nb_ + i;
        }
        return b;
    };
    for (const auto& X : cloud.points) ++cnt[bucket_of(X) + 1];
    for (std::size_t b = 0; b < nbuck; ++b) cnt[b + 1] += cnt[b];
    bstart_ = cnt;
    bitems_.assign(cloud.points.size(), 0);
    std::vector<std::size_t> fill(cnt.begin(), cnt.end() - 1);
    for (std::size_t i = 0; i < cloud.points.size(); ++i) bitems_[fill[bucket_of(cloud.points[i])]++] = i;

    // real-space screened sum excluding atoms closer than max_eps (handled per scale)
    for (std::size_t idx = 0; idx < total; ++idx) {
        double* out = &raw_[3 * idx];
        for_near(idx, rc, [&](std::size_t, const Vec& z, double r) {
            if (r < max_eps_) return;
            double q = 1.0 - gaussian_ball_mass(r / sigma_, d);
            Vec gg = green_gradient(z, d);
            for (int a = 0; a < d; ++a) out[a] += q * gg[a];
        });
    }
}

Vec TorusGridSolver::node(std::size_t idx) const {
    Vec x{0.0, 0.0, 0.0};
    for (int a = d_ - 1; a >= 0; --a) {
        x[a] = -0.5 * cloud_->domain.L + static_cast<double>(idx % n_) * h_;
        idx /= n_;
    }
    return x;
}

template <class F>
void TorusGridSolver::for_near(std::size_t idx, double radius, F&& f) const {
    const auto& dom = cloud_->domain;
    const int d = d_;
    Vec x = node(idx);
    int layers = static_cast<int>(std::ceil(radius / bside_));
    int span = std::min(2 * layers + 1, nb_);
    int lo[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) {
        int c = static_cast<int>(std::floor((x[a] + 0.5 * dom.L) / bside_));
        lo[a] = span == nb_ ? 0 : c - layers;
    }
    const double r2max = radius * radius;
    int cnt[3] = {1, 1, 1};
    for (int a = 0; a < d; ++a) cnt[a] = span;
    for (int i0 = 0; i0 < cnt[0]; ++i0)
        for (int i1 = 0; i1 < cnt[1]; ++i1)
            for (int i2 = 0; i2 < cnt[2]; ++i2) {
                int ii[3] = {lo[0] + i0, lo[1] + i1, lo[2] + i2};
                std::size_t b = 0;
                for (int a = 0; a < d; ++a) b = b * nb_ + static_cast<std::size_t>(((ii[a] % nb_) + nb_) % nb_);
                for (std::size_t p = bstart_[b]; p < bstart_[b + 1]; ++p) {
                    std::size_t i = bitems_[p];
                    Vec z = min_image(x, cloud_->points[i], dom);
                    double r2 = norm2(z, d);
                    if (r2 < r2max) f(i, z, std::sqrt(r2));
                }
            }
}

void TorusGridSolver::grad(double eps, std::vector<double>& out) const {
    if (!(eps > 0.0) || eps > max_eps_ * (1 + 1e-12)) throw UsageError("scale outside the grid solver's range");
    const int d = d_;
    out.assign(raw_.size(), 0.0);
    const double w = std::pow(cloud_->R, -0.5 * d);
    for (std::size_t idx = 0; idx < nodes(); ++idx) {
        double acc[3] = {raw_[3 * idx], raw_[3 * idx + 1], raw_[3 * idx + 2]};
        for_near(idx, max_eps_, [&](std::size_t, const Vec& z, double r) {
            if (r == 0.0) return;
            double q = m_->mass(r / eps) - gaussian_ball_mass(r / sigma_, d);
            Vec gg = green_gradient(z, d);
            for (int a = 0; a < d; ++a) acc[a] += q * gg[a];
        });
        for (int a = 0; a < 3; ++a) out[3 * idx + a] = acc[a] * w;
    }
}

void TorusGridSolver::smooth(double eps, const std::vector<Vec>& wts, std::vector<double>& out) const {
    if (!(eps > 0.0) || eps > max_eps_ * (1 + 1e-12)) throw UsageError("scale outside the grid solver's range");
    out.assign(raw_.size(), 0.0);
    for (std::size_t idx = 0; idx < nodes(); ++idx) {
        double* o = &out[3 * idx];
        for_near(idx, eps, [&](std::size_t i, const Vec&, double r) {
            double e = m_->radial(r, eps);
            for (int a = 0; a < d_; ++a) o[a] += e * wts[i][a];
        });
    }
}

void TorusGridSolver::density(double eps, std::vector<double>& out) const {
    if (!(eps > 0.0) || eps > max_eps_ * (1 + 1e-12)) throw UsageError("scale outside the grid solver's range");
    out.assign(nodes(), 0.0);
    const double mass = cloud_->atom_mass();
    for (std::size_t idx = 0; idx < nodes(); ++idx)
        for_near(idx, eps, [&](std::size_t, const Vec&, double r) { out[idx] += mass * m_->radial(r, eps); });
}

// ---------------------------------------------------------------- test functions and GFF

TestFunction::TestFunction(int d, std::string name, std::vector<BumpTerm> terms)
    : d_(d), name_(std::move(name)), terms_(std::move(terms)) {}

TestFunction TestFunction::gradient_bump(int d, double amplitude, double radius) {
    BumpTerm t;
    t.kind = BumpTerm::Kind::Gradient;
    t.amplitude = amplitude;
    t.radius = radius;
    return TestFunction(d, "gradient_bump", {t});
}

TestFunction TestFunction::directional_bump(int d, double amplitude, double radius, const Vec& direction) {
    BumpTerm t;
    t.kind = BumpTerm::Kind::Directional;
    t.amplitude = amplitude;
    t.radius = radius;
    t.direction = direction;
    return TestFunction(d, "directional_bump", {t});
}

Vec TestFunction::eval(const Vec& x) const {
    Vec f{0.0, 0.0, 0.0};
    for (const auto& t : terms_) {
        Vec y{0.0, 0.0, 0.0};
        for (int a = 0; a < d_; ++a) y[a] = x[a] - t.center[a];
        double s = std::sqrt(norm2(y, d_)) / t.radius;
        if (s >= 1.0) continue;
        double b = Mollifier::profile(s);
        if (t.kind == BumpTerm::Kind::Directional) {
            for (int a = 0; a < d_; ++a) f[a] += t.amplitude * b * t.direction[a];
        } else {
            double q = 1.0 - s * s;
            double c = -2.0 * t.amplitude * b / (q * q * t.radius * t.radius);
            for (int a = 0; a < d_; ++a) f[a] += c * y[a];
        }
    }
    return f;
}

std::array<cplx, 3> TestFunction::fourier(const Vec& k) const {
    std::array<cplx, 3> out{cplx(0.0), cplx(0.0), cplx(0.0)};
    const auto& m = Mollifier::get(d_);
    for (const auto& t : terms_) {
        double rd = std::pow(t.radius, d_);
        cplx b = t.amplitude * rd / m.normalization() * m.hat(k, t.radius) * std::polar(1.0, -dot(k, t.center, d_));
        for (int a = 0; a < d_; ++a) {
            if (t.kind == BumpTerm::Kind::Directional)
                out[a] += b * t.direction[a];
            else
                out[a] += cplx(0.0, k[a]) * b;
        }
    }
    return out;
}

Vec TestFunction::integral() const {
    Vec s{0.0, 0.0, 0.0};
    const auto& m = Mollifier::get(d_);
    for (const auto& t : terms_)
        if (t.kind == BumpTerm::Kind::Directional)
            for (int a = 0; a < d_; ++a) s[a] += t.amplitude * std::pow(t.radius, d_) / m.normalization() * t.direction[a];
    return s;
}

double TestFunction::support_radius() const {
    double r = 0.0;
    for (const auto& t : terms_) r = std::max(r, std::sqrt(norm2(t.center, d_)) + t.radius);
    return r;
}

double TestFunction::min_bump_radius() const {
    double r = std::numeric_limits<double>::infinity();
    for (const auto& t : terms_) r = std::min(r, t.radius);
    return r;
}

TestFunction TestFunction::scaled(double a) const {
    TestFunction g = *this;
    for (auto& t : g.terms_) t.amplitude *= a;
    return g;
}

double TestFunction::gradient_potential_l2sq() const {
    if (terms_.size() != 1 || terms_[0].kind != BumpTerm::Kind::Gradient)
        throw UsageError("closed form int g^2 needs a single gradient term");
    const auto& m = Mollifier::get(d_);
    const auto& t = terms_[0];
    double c = m.normalization();
    return t.amplitude * t.amplitude * std::pow(t.radius, d_) * m.lp_power(2.0) / (c * c);
}

namespace {

// Gauss-Legendre nodes and weights on [-1, 1].
void gauss_legendre(int n, std::vector<double>& x, std::vector<double>& w) {
    x.clear();
    w.clear();
    for (double z : boost::math::legendre_p_zeros<double>(n)) {
        double dp = boost::math::legendre_p_prime(n, z);
        double wt = 2.0 / ((1.0 - z * z) * dp * dp);
        x.push_back(z);
        w.push_back(wt);
        if (z != 0.0) {
            x.push_back(-z);
            w.push_back(wt);
        }
    }
}

// (2 pi)^{-d} int |k.(f_hat - eta_hat int f)|^2 / |k|^4 dk in polar coordinates: radial Gauss panels
// times a Gauss-Legendre (cos theta) x trapezoid (phi) rule on the sphere.
double whole_space_value(const TestFunction& f, int d, bool renorm, int panels, int n_ang) {
    const auto& m = Mollifier::get(d);
    const Vec I = f.integral();
    const double rmin = renorm ? std::min(1.0, f.min_bump_radius()) : f.min_bump_radius();
    const double kmax = m.hat_extent() / rmin;

    std::vector<std::pair<Vec, double>> dirs;  // unit vectors with surface weights
    if (d == 1) {
        dirs = {{Vec{1.0, 0.0, 0.0}, 1.0}, {Vec{-1.0, 0.0, 0.0}, 1.0}};
    } else if (d == 2) {
        for (int i = 0; i < 2 * n_ang; ++i) {
            double t = kPi * i / n_ang;
            dirs.push_back({Vec{std::cos(t), std::sin(t), 0.0}, kPi / n_ang});
        }
    } else {
        std::vector<double> mu, wmu;
        gauss_legendre(n_ang, mu, wmu);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            double st = std::sqrt(1.0 - mu[i] * mu[i]);
            for (int j = 0; j < 2 * n_ang; ++j) {
                double ph = kPi * j / n_ang;
                dirs.push_back({Vec{st * std::cos(ph), st * std::sin(ph), mu[i]}, wmu[i] * kPi / n_ang});
            }
        }
    }
    std::vector<double> x, w;
    gauss_legendre(20, x, w);
    const double width = kmax / panels;
    double sum = 0.0;
    for (int pnl = 0; pnl < panels; ++pnl)
        for (std::size_t q = 0; q < x.size(); ++q) {
            const double kap = width * (pnl + 0.5 * (x[q] + 1.0));
            const double eh = renorm ? m.hat_radial(kap, 1.0) : 0.0;
            double ang = 0.0;
            for (const auto& [om, wo] : dirs) {
                Vec k{kap * om[0], kap * om[1], kap * om[2]};
                auto fh = f.fourier(k);
                cplx kf = 0.0;
                for (int a = 0; a < d; ++a) kf += om[a] * (fh[a] - eh * I[a]);
                ang += wo * std::norm(kf);
            }
            sum += 0.5 * width * w[q] * std::pow(kap, d - 3) * ang;
        }
    return sum / std::pow(2.0 * kPi, d);
}

}  // namespace

GffCovariance gff_variance(const TestFunction& f, int d, bool renormalize) {
    if (f.dim() != d) throw UsageError("test function dimension mismatch");
    const double supp = f.support_radius();
    if (!std::isfinite(supp)) throw UsageError("test function must have compact support");
    GffCovariance g;
    g.function = f.name();
    g.renormalized = renormalize;
    if (supp == 0.0) return g;
    Vec I = f.integral();
    if (d == 2 && !renormalize && std::sqrt(norm2(I, d)) > 1e-12)
        throw UsageError("d=2 needs the renormalized pairing f - eta int f when int f != 0");
    // angular resolution follows the largest phase k.center over the spectral extent
    double cmax = 0.0;
    for (const auto& t : f.terms()) cmax = std::max(cmax, std::sqrt(norm2(t.center, d)));
    const double rmin = renormalize ? std::min(1.0, f.min_bump_radius()) : f.min_bump_radius();
    const int n_ang = 16 + static_cast<int>(std::ceil(Mollifier::get(d).hat_extent() / rmin * cmax));
    g.value_coarse = whole_space_value(f, d, renormalize, 40, n_ang);
    g.value = whole_space_value(f, d, renormalize, 80, 2 * n_ang);
    g.rel_change = g.value > 0.0 ? std::abs(g.value - g.value_coarse) / g.value : 0.0;
    return g;
}

PeriodicPotential periodic_potential(const TestFunction& f, const TorusDomain& dom, int n, bool renormalize) {
    const int d = dom.d;
    if (f.support_radius() > 0.25 * dom.L) throw UsageError("support too large for the box");
    const auto& m = Mollifier::get(d);
    Vec I = f.integral();
    const std::size_t total = ipow(n, d);
    std::vector<cplx> g(total, cplx(0.0, 0.0));
    double l2 = 0.0;
    const double vol = dom.volume();
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t r = idx;
        int kk[3] = {0, 0, 0};
        for (int a = d - 1; a >= 0; --a) {
            int mm = static_cast<int>(r % n);
            r /= n;
            kk[a] = mm < n / 2 ? mm : mm - n;
        }
        Vec k{2.0 * kPi * kk[0] / dom.L, 2.0 * kPi * kk[1] / dom.L, 2.0 * kPi * kk[2] / dom.L};
        double k2 = norm2(k, d);
        if (k2 == 0.0) continue;
        auto fh = f.fourier(k);
        double eh = renormalize ? m.hat(k, 1.0) : 0.0;
        cplx kf = 0.0;
        for (int a = 0; a < d; ++a) kf += k[a] * (fh[a] - eh * I[a]);
        cplx c = cplx(0.0, 1.0) * kf / (k2 * vol);
        l2 += std::norm(c);
        double phase = 0.0;
        for (int a = 0; a < d; ++a) phase -= kPi * kk[a];
        g[idx] = c * std::polar(1.0, phase);
    }
    inverse_fft(g, d, n);
    PeriodicPotential p;
    p.domain = dom;
    p.n = n;
    p.values.resize(total);
    for (std::size_t i = 0; i < total; ++i) p.values[i] = g[i].real();
    p.l2sq = l2 * vol;
    return p;
}

double PeriodicPotential::eval(const Vec& x) const {
    const int d = domain.d;
    const double h = domain.L / n;
    double w[3][4];
    int base[3] = {0, 0, 0};
    for (int a = 0; a < d; ++a) {
        double p = (wrap_coord(x[a], domain.L) + 0.5 * domain.L) / h;
        double fl = std::floor(p);
        base[a] = static_cast<int>(fl) - 1;
        cubic_weights(p - fl, w[a]);
    }
    auto at = [&](int i, int j, int l) {
        std::size_t idx = static_cast<std::size_t>(((base[0] + i) % n + n) % n);
        if (d > 1) idx = idx * n + static_cast<std::size_t>(((base[1] + j) % n + n) % n);
        if (d > 2) idx = idx * n + static_cast<std::size_t>(((base[2] + l) % n + n) % n);
        return values[idx];
    };
    double s = 0.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < (d > 1 ? 4 : 1); ++j)
            for (int l = 0; l < (d > 2 ? 4 : 1); ++l) {
                double ww = w[0][i] * (d > 1 ? w[1][j] : 1.0) * (d > 2 ? w[2][l] : 1.0);
                s += ww * at(i, j, l);
            }
    return s;
}

}  // namespace matchfluct
