#include "flowmixer/cfd.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowmixer/error.hpp"

namespace flowmixer::cfd {

namespace {

constexpr double kU[2] = {0.0, 0.5};  // (ox, oy) of u samples
constexpr double kV[2] = {0.5, 0.0};
constexpr double kC[2] = {0.5, 0.5};

struct Stencil {
    double value, lo, hi;
};

Stencil sample_stencil(const Matrix& f, double ox, double oy, double dx, double dy, double x, double y) {
    const double fi = std::clamp(x / dx - ox, 0.0, double(f.cols() - 1));
    const double fj = std::clamp(y / dy - oy, 0.0, double(f.rows() - 1));
    const auto i0 = std::size_t(fi), j0 = std::size_t(fj);
    const std::size_t i1 = std::min(i0 + 1, f.cols() - 1), j1 = std::min(j0 + 1, f.rows() - 1);
    const double tx = fi - double(i0), ty = fj - double(j0);
    const double a = f(j0, i0), b = f(j0, i1), c = f(j1, i0), d = f(j1, i1);
    return {(1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d), std::min({a, b, c, d}),
            std::max({a, b, c, d})};
}

// One semi-Lagrangian pass of a staggered quantity; velocity is sampled from (u, v).
// sign = +1 traces back (forward transport), -1 traces forward (reverse transport).
Matrix sl_pass(const Matrix& phi, const double* off, const Matrix& u, const Matrix& v, double dx, double dy,
               double dt, double sign, Matrix* lo = nullptr, Matrix* hi = nullptr) {
    Matrix out(phi.rows(), phi.cols());
    if (lo) *lo = Matrix(phi.rows(), phi.cols()), *hi = Matrix(phi.rows(), phi.cols());
    for (std::size_t j = 0; j < phi.rows(); ++j)
        for (std::size_t i = 0; i < phi.cols(); ++i) {
            const double x = (double(i) + off[0]) * dx, y = (double(j) + off[1]) * dy;
            const double uu = sample(u, kU[0], kU[1], dx, dy, x, y);
            const double vv = sample(v, kV[0], kV[1], dx, dy, x, y);
            const Stencil s = sample_stencil(phi, off[0], off[1], dx, dy, x - sign * dt * uu, y - sign * dt * vv);
            out(j, i) = s.value;
            if (lo) (*lo)(j, i) = s.lo, (*hi)(j, i) = s.hi;
        }
    return out;
}

// Limited MacCormack: forward pass, reverse pass, half the round-trip error added
// back, falling back to the forward value when the result leaves the stencil range.
Matrix transport(const Matrix& phi, const double* off, const Matrix& u, const Matrix& v, double dx, double dy,
                 double dt, AdvectionScheme scheme) {
    if (scheme == AdvectionScheme::semi_lagrangian) return sl_pass(phi, off, u, v, dx, dy, dt, 1.0);
    Matrix lo, hi;
    Matrix fwd = sl_pass(phi, off, u, v, dx, dy, dt, 1.0, &lo, &hi);
    Matrix back = sl_pass(fwd, off, u, v, dx, dy, dt, -1.0);
    Matrix out(phi.rows(), phi.cols());
    for (std::size_t k = 0; k < out.size(); ++k) {
        const double c = fwd.flat()[k] + 0.5 * (phi.flat()[k] - back.flat()[k]);
        out.flat()[k] = (c < lo.flat()[k] || c > hi.flat()[k]) ? fwd.flat()[k] : c;
    }
    return out;
}

// Boundary treatment of one end of a 1-D diffusion line.
struct End {
    enum Kind { fixed, neumann, wall } kind;
    double value = 0;
};

struct ComponentBc {
    End x_lo, x_hi, y_lo, y_hi;
};

ComponentBc u_bc(const FlowConfig& c) {
    if (c.bc == BcMode::channel_inflow) return {{End::fixed}, {End::fixed}, {End::neumann}, {End::neumann}};
    return {{End::fixed}, {End::fixed}, {End::wall, 0.0}, {End::wall, c.u_ref}};
}

ComponentBc v_bc(const FlowConfig& c) {
    if (c.bc == BcMode::channel_inflow) return {{End::wall, 0.0}, {End::neumann}, {End::fixed}, {End::fixed}};
    return {{End::wall, 0.0}, {End::wall, 0.0}, {End::fixed}, {End::fixed}};
}

// Value beyond the end of a line for explicit second differences.
double ghost(const End& e, double first) {
    switch (e.kind) {
        case End::neumann: return first;
        case End::wall: return 2 * e.value - first;
        case End::fixed: break;
    }
    return first;
}

// (I + a D2) along rows (dir 0) or columns (dir 1). Fixed end nodes, and lines
// that are fixed nodes of the other direction, are copied.
Matrix explicit_part(const Matrix& f, double a, const End& lo, const End& hi, int dir, const End& other_lo,
                     const End& other_hi) {
    Matrix out = f;
    const std::size_t n = dir == 0 ? f.cols() : f.rows(), m = dir == 0 ? f.rows() : f.cols();
    const std::size_t line_start = other_lo.kind == End::fixed ? 1 : 0;
    const std::size_t line_stop = other_hi.kind == End::fixed ? m - 1 : m;
    auto at = [&](std::size_t line, std::size_t k) -> double { return dir == 0 ? f(line, k) : f(k, line); };
    for (std::size_t line = line_start; line < line_stop; ++line)
        for (std::size_t k = 0; k < n; ++k) {
            if ((k == 0 && lo.kind == End::fixed) || (k == n - 1 && hi.kind == End::fixed)) continue;
            const double c = at(line, k);
            const double left = k > 0 ? at(line, k - 1) : ghost(lo, c);
            const double right = k + 1 < n ? at(line, k + 1) : ghost(hi, c);
            (dir == 0 ? out(line, k) : out(k, line)) = c + a * (left - 2 * c + right);
        }
    return out;
}

// Solves (I - a D2) x = g along rows (dir 0) or columns (dir 1). Lines that are
// fixed nodes of the other direction, and fixed end nodes, keep g's values.
Matrix implicit_part(const Matrix& g, double a, const End& lo, const End& hi, int dir, const End& other_lo,
                     const End& other_hi) {
    Matrix out = g;
    const std::size_t n = dir == 0 ? g.cols() : g.rows(), m = dir == 0 ? g.rows() : g.cols();
    const std::size_t start = lo.kind == End::fixed ? 1 : 0;
    const std::size_t stop = hi.kind == End::fixed ? n - 1 : n;
    const std::size_t line_start = other_lo.kind == End::fixed ? 1 : 0;
    const std::size_t line_stop = other_hi.kind == End::fixed ? m - 1 : m;
    if (stop <= start || line_stop <= line_start) return out;
    const std::size_t len = stop - start, lines = line_stop - line_start;

    std::vector<double> lower(len - 1, -a), diag(len, 1 + 2 * a), upper(len - 1, -a);
    double rhs_lo = 0, rhs_hi = 0;
    if (lo.kind == End::neumann) diag[0] -= a;
    if (lo.kind == End::wall) diag[0] += a, rhs_lo = 2 * a * lo.value;
    if (hi.kind == End::neumann) diag[len - 1] -= a;
    if (hi.kind == End::wall) diag[len - 1] += a, rhs_hi = 2 * a * hi.value;

    auto at = [&](std::size_t line, std::size_t k) -> double& { return dir == 0 ? out(line, k) : out(k, line); };
    Matrix rhs(len, lines);
    for (std::size_t l = 0; l < lines; ++l) {
        const std::size_t line = line_start + l;
        for (std::size_t k = 0; k < len; ++k) rhs(k, l) = at(line, start + k);
        rhs(0, l) += rhs_lo;
        rhs(len - 1, l) += rhs_hi;
        if (lo.kind == End::fixed) rhs(0, l) += a * at(line, 0);
        if (hi.kind == End::fixed) rhs(len - 1, l) += a * at(line, n - 1);
    }
    const Matrix sol = linalg::tridiag_solve(lower, diag, upper, rhs);
    for (std::size_t l = 0; l < lines; ++l)
        for (std::size_t k = 0; k < len; ++k) at(line_start + l, start + k) = sol(k, l);
    return out;
}

void diffuse_component(Matrix& f, const ComponentBc& bc, double ax, double ay) {
    const Matrix g = explicit_part(f, ay, bc.y_lo, bc.y_hi, 1, bc.x_lo, bc.x_hi);
    const Matrix w = implicit_part(g, ax, bc.x_lo, bc.x_hi, 0, bc.y_lo, bc.y_hi);
    const Matrix h = explicit_part(w, ax, bc.x_lo, bc.x_hi, 0, bc.y_lo, bc.y_hi);
    f = implicit_part(h, ay, bc.y_lo, bc.y_hi, 1, bc.x_lo, bc.x_hi);
}

// Centre-velocity gradient component at (j, i) along x (dir 0) or y (dir 1).
double diff(const Matrix& f, std::size_t j, std::size_t i, double h, int dir) {
    const std::size_t n = dir == 0 ? f.cols() : f.rows();
    const std::size_t k = dir == 0 ? i : j;
    auto at = [&](std::size_t q) { return dir == 0 ? f(j, q) : f(q, i); };
    if (k == 0) return (-3 * at(0) + 4 * at(1) - at(2)) / (2 * h);
    if (k == n - 1) return (3 * at(n - 1) - 4 * at(n - 2) + at(n - 3)) / (2 * h);
    return (at(k + 1) - at(k - 1)) / (2 * h);
}

Matrix centre_u(const Matrix& u) {
    Matrix c(u.rows(), u.cols() - 1);
    for (std::size_t j = 0; j < c.rows(); ++j)
        for (std::size_t i = 0; i < c.cols(); ++i) c(j, i) = 0.5 * (u(j, i) + u(j, i + 1));
    return c;
}

Matrix centre_v(const Matrix& v) {
    Matrix c(v.rows() - 1, v.cols());
    for (std::size_t j = 0; j < c.rows(); ++j)
        for (std::size_t i = 0; i < c.cols(); ++i) c(j, i) = 0.5 * (v(j, i) + v(j + 1, i));
    return c;
}

}  // namespace

std::string to_string(BcMode m) { return m == BcMode::channel_inflow ? "channel_inflow" : "appendix_lid"; }

BcMode parse_bc_mode(const std::string& s) {
    if (s == "channel_inflow" || s == "channel") return BcMode::channel_inflow;
    if (s == "appendix_lid" || s == "lid") return BcMode::appendix_lid;
    throw ConfigError("unknown boundary mode '" + s + "' (channel_inflow, appendix_lid)");
}

std::string to_string(AdvectionScheme s) { return s == AdvectionScheme::maccormack ? "maccormack" : "semi_lagrangian"; }

AdvectionScheme parse_advection(const std::string& s) {
    if (s == "maccormack") return AdvectionScheme::maccormack;
    if (s == "semi_lagrangian") return AdvectionScheme::semi_lagrangian;
    throw ConfigError("unknown advection scheme '" + s + "' (maccormack, semi_lagrangian)");
}

void FlowConfig::validate() const {
    if (nx < 64 || ny < 32) throw ConfigError("cfd grid must be at least 64 x 32");
    if (!(lx > 0 && ly > 0 && dt > 0 && re > 0 && diameter > 0 && total_time > 0))
        throw ConfigError("cfd lengths, dt, Re and total_time must be positive");
    if (snapshot_every == 0) throw ConfigError("snapshot_every must be at least 1");
    const double r = diameter / 2;
    if (cx - r <= 0 || cx + r >= lx || cy - r <= 0 || cy + r >= ly) throw ConfigError("cylinder lies outside the domain");
    if (!(probe_x > 0 && probe_x < lx && probe_y > 0 && probe_y < ly)) throw ConfigError("probe lies outside the domain");
}

std::size_t FlowConfig::steps() const { return std::size_t(std::llround(total_time / dt)); }

FlowConfig FlowConfig::from_config(const Config& c, const std::string& s) {
    FlowConfig f;
    f.lx = c.get_double(s, "lx", f.lx);
    f.ly = c.get_double(s, "ly", f.ly);
    f.nx = std::size_t(c.get_int(s, "nx", (long long)f.nx));
    f.ny = std::size_t(c.get_int(s, "ny", (long long)f.ny));
    f.re = c.get_double(s, "re", f.re);
    f.dt = c.get_double(s, "dt", f.dt);
    f.snapshot_every = std::size_t(c.get_int(s, "snapshot_every", (long long)f.snapshot_every));
    f.diameter = c.get_double(s, "diameter", f.diameter);
    f.cx = c.get_double(s, "cx", f.lx / 5);
    f.cy = c.get_double(s, "cy", f.ly / 2);
    f.bc = parse_bc_mode(c.get(s, "bc", to_string(f.bc)));
    f.total_time = c.get_double(s, "total_time", f.total_time);
    f.u_ref = c.get_double(s, "u_ref", f.u_ref);
    f.advection = parse_advection(c.get(s, "advection", to_string(f.advection)));
    f.perturbation = c.get_double(s, "perturbation", f.perturbation);
    f.perturbation_time = c.get_double(s, "perturbation_time", f.perturbation_time);
    f.record_from = c.get_double(s, "record_from", f.record_from);
    f.probe_x = c.get_double(s, "probe_x", f.cx + 2 * f.diameter);
    f.probe_y = c.get_double(s, "probe_y", f.cy);
    f.validate();
    return f;
}

void FlowConfig::to_config(Config& c, const std::string& s) const {
    c.set(s, "lx", format_number(lx));
    c.set(s, "ly", format_number(ly));
    c.set(s, "nx", std::to_string(nx));
    c.set(s, "ny", std::to_string(ny));
    c.set(s, "re", format_number(re));
    c.set(s, "dt", format_number(dt));
    c.set(s, "snapshot_every", std::to_string(snapshot_every));
    c.set(s, "cx", format_number(cx));
    c.set(s, "cy", format_number(cy));
    c.set(s, "diameter", format_number(diameter));
    c.set(s, "bc", to_string(bc));
    c.set(s, "total_time", format_number(total_time));
    c.set(s, "u_ref", format_number(u_ref));
    c.set(s, "advection", to_string(advection));
    c.set(s, "perturbation", format_number(perturbation));
    c.set(s, "perturbation_time", format_number(perturbation_time));
    c.set(s, "record_from", format_number(record_from));
    c.set(s, "probe_x", format_number(probe_x));
    c.set(s, "probe_y", format_number(probe_y));
}

Mask Mask::none(std::size_t ny, std::size_t nx) {
    return {std::vector<std::uint8_t>(ny * nx, 0), std::vector<std::uint8_t>(ny * (nx + 1), 0),
            std::vector<std::uint8_t>((ny + 1) * nx, 0)};
}

Mask Mask::cylinder(const FlowConfig& c) {
    const std::size_t nx = c.nx, ny = c.ny;
    Mask m = none(ny, nx);
    const double r2 = 0.25 * c.diameter * c.diameter;
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = (double(i) + 0.5) * c.dx() - c.cx, y = (double(j) + 0.5) * c.dy() - c.cy;
            m.cell[j * nx + i] = x * x + y * y <= r2;
        }
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i <= nx; ++i)
            m.u_face[j * (nx + 1) + i] = (i > 0 && m.cell[j * nx + i - 1]) || (i < nx && m.cell[j * nx + i]);
    for (std::size_t j = 0; j <= ny; ++j)
        for (std::size_t i = 0; i < nx; ++i)
            m.v_face[j * nx + i] = (j > 0 && m.cell[(j - 1) * nx + i]) || (j < ny && m.cell[j * nx + i]);
    return m;
}

std::vector<std::uint8_t> Mask::far_from_body(std::size_t ny, std::size_t nx, std::size_t margin) const {
    std::vector<std::uint8_t> far(ny * nx, 1);
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            if (!cell[j * nx + i]) continue;
            const std::size_t j0 = j >= margin ? j - margin : 0, i0 = i >= margin ? i - margin : 0;
            for (std::size_t jj = j0; jj <= std::min(ny - 1, j + margin); ++jj)
                for (std::size_t ii = i0; ii <= std::min(nx - 1, i + margin); ++ii) far[jj * nx + ii] = 0;
        }
    return far;
}

FlowField FlowField::zeros(const FlowConfig& c) {
    FlowField f;
    f.u = Matrix(c.ny, c.nx + 1);
    f.v = Matrix(c.ny + 1, c.nx);
    f.p = Matrix(c.ny, c.nx);
    f.mask = Mask::cylinder(c);
    return f;
}

FlowField FlowField::initial(const FlowConfig& c) {
    FlowField f = zeros(c);
    if (c.bc == BcMode::channel_inflow)
        for (double& x : f.u.flat()) x = c.u_ref;
    enforce_bc(f, c);
    return f;
}

double sample(const Matrix& f, double ox, double oy, double dx, double dy, double x, double y) {
    return sample_stencil(f, ox, oy, dx, dy, x, y).value;
}

std::pair<Matrix, Matrix> advect(const FlowField& f, const FlowConfig& c, double dt) {
    return {transport(f.u, kU, f.u, f.v, c.dx(), c.dy(), dt, c.advection),
            transport(f.v, kV, f.u, f.v, c.dx(), c.dy(), dt, c.advection)};
}

Matrix advect_scalar(const Matrix& s, const Matrix& u, const Matrix& v, double dx, double dy, double dt,
                     AdvectionScheme scheme) {
    if (u.rows() != s.rows() || u.cols() != s.cols() + 1 || v.rows() != s.rows() + 1 || v.cols() != s.cols())
        throw DimensionError("advect_scalar: velocity grids do not match the scalar grid");
    return transport(s, kC, u, v, dx, dy, dt, scheme);
}

void adi_diffuse(Matrix& u, Matrix& v, const FlowConfig& c, double dt) {
    const double k = dt / (2 * c.re);
    const double ax = k / (c.dx() * c.dx()), ay = k / (c.dy() * c.dy());
    diffuse_component(u, u_bc(c), ax, ay);
    diffuse_component(v, v_bc(c), ax, ay);
}

Matrix divergence(const Matrix& u, const Matrix& v, double dx, double dy) {
    const std::size_t ny = u.rows(), nx = u.cols() - 1;
    if (v.rows() != ny + 1 || v.cols() != nx) throw DimensionError("divergence: staggered shapes do not match");
    Matrix d(ny, nx);
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) d(j, i) = (u(j, i + 1) - u(j, i)) / dx + (v(j + 1, i) - v(j, i)) / dy;
    return d;
}

Projector::Projector(const FlowConfig& c)
    : poisson_(std::make_unique<linalg::PoissonSolver>(c.ny, c.nx, c.dx(), c.dy())), dx_(c.dx()), dy_(c.dy()) {}
Projector::~Projector() = default;
Projector::Projector(Projector&&) noexcept = default;
Projector& Projector::operator=(Projector&&) noexcept = default;

void Projector::project(FlowField& f, double dt) {
    Matrix rhs = divergence(f.u, f.v, dx_, dy_);
    const double mean = linalg::sum(rhs) / double(rhs.size());
    for (double& x : rhs.flat()) x = (x - mean) / dt;
    f.p = poisson_->solve(rhs);
    const std::size_t ny = f.p.rows(), nx = f.p.cols();
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 1; i < nx; ++i) f.u(j, i) -= dt * (f.p(j, i) - f.p(j, i - 1)) / dx_;
    for (std::size_t j = 1; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) f.v(j, i) -= dt * (f.p(j, i) - f.p(j - 1, i)) / dy_;
}

void pressure_project(FlowField& f, const FlowConfig& c, double dt) {
    Projector p(c);
    p.project(f, dt);
}

void enforce_bc(FlowField& f, const FlowConfig& c) {
    const std::size_t ny = f.u.rows(), nx = f.v.cols();
    if (c.bc == BcMode::channel_inflow) {
        for (std::size_t j = 0; j < ny; ++j) f.u(j, 0) = c.u_ref;
    } else {
        for (std::size_t j = 0; j < ny; ++j) f.u(j, 0) = 0.0, f.u(j, nx) = 0.0;
    }
    for (std::size_t i = 0; i < nx; ++i) f.v(0, i) = 0.0, f.v(ny, i) = 0.0;
    for (std::size_t k = 0; k < f.u.size(); ++k)
        if (f.mask.u_face[k]) f.u.flat()[k] = 0.0;
    for (std::size_t k = 0; k < f.v.size(); ++k)
        if (f.mask.v_face[k]) f.v.flat()[k] = 0.0;
}

Matrix vorticity(const FlowField& f, const FlowConfig& c) {
    const Matrix uc = centre_u(f.u), vc = centre_v(f.v);
    Matrix w(uc.rows(), uc.cols());
    for (std::size_t j = 0; j < w.rows(); ++j)
        for (std::size_t i = 0; i < w.cols(); ++i) {
            if (f.mask.cell[j * w.cols() + i]) continue;
            w(j, i) = diff(vc, j, i, c.dx(), 0) - diff(uc, j, i, c.dy(), 1);
        }
    return w;
}

Forces force_coefficients(const FlowField& f, const FlowConfig& c) {
    const std::size_t ny = c.ny, nx = c.nx;
    const double dx = c.dx(), dy = c.dy(), nu = 1.0 / c.re;
    const Matrix uc = centre_u(f.u), vc = centre_v(f.v);
    double fx = 0, fy = 0;
    auto solid = [&](std::size_t j, std::size_t i) { return f.mask.cell[j * nx + i] != 0; };
    for (std::size_t j = 0; j < ny; ++j)
        for (std::size_t i = 0; i < nx; ++i) {
            if (!solid(j, i)) continue;
            // Neighbour offset, outward normal, face length, wall-to-centre distance.
            struct Face {
                bool ok;
                std::size_t jj, ii;
                double nx_, ny_, len, h;
            };
            const Face faces[4] = {{i + 1 < nx, j, i + 1, 1, 0, dy, dx / 2},
                                   {i > 0, j, i - 1, -1, 0, dy, dx / 2},
                                   {j + 1 < ny, j + 1, i, 0, 1, dx, dy / 2},
                                   {j > 0, j - 1, i, 0, -1, dx, dy / 2}};
            for (const auto& q : faces) {
                if (!q.ok || solid(q.jj, q.ii)) continue;
                const double p = f.p(q.jj, q.ii);
                fx += (-p * q.nx_ + nu * uc(q.jj, q.ii) / q.h) * q.len;
                fy += (-p * q.ny_ + nu * vc(q.jj, q.ii) / q.h) * q.len;
            }
        }
    const double norm = 0.5 * c.u_ref * c.u_ref * c.diameter;
    if (norm == 0) return {};
    return {fx / norm, fy / norm};
}

Simulator::Simulator(const FlowConfig& c) : cfg_(c), field_(), projector_(c) {
    cfg_.validate();
    field_ = FlowField::initial(cfg_);
    far_ = field_.mask.far_from_body(cfg_.ny, cfg_.nx, 2);
}

StepStats Simulator::step() {
    const FlowConfig& c = cfg_;
    FlowField& f = field_;
    const double dt = c.dt, dx = c.dx(), dy = c.dy();
    const std::size_t ny = c.ny, nx = c.nx;

    std::vector<double> outlet(ny);
    if (c.bc == BcMode::channel_inflow)
        for (std::size_t j = 0; j < ny; ++j) outlet[j] = f.u(j, nx) - dt * c.u_ref * (f.u(j, nx) - f.u(j, nx - 1)) / dx;

    auto [us, vs] = advect(f, c, dt);
    f.u = std::move(us);
    f.v = std::move(vs);
    enforce_bc(f, c);
    if (c.bc == BcMode::channel_inflow)
        for (std::size_t j = 0; j < ny; ++j) f.u(j, nx) = outlet[j];
    adi_diffuse(f.u, f.v, c, dt);

    if (c.bc == BcMode::channel_inflow && f.time < c.perturbation_time && c.perturbation != 0) {
        // Transient cross-flow body force just behind the body.
        const double x0 = c.cx + c.diameter, y0 = c.cy, w = 0.25 * c.diameter * c.diameter;
        for (std::size_t j = 1; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) {
                const double x = (double(i) + 0.5) * dx - x0, y = double(j) * dy - y0;
                f.v(j, i) += dt * c.perturbation * std::exp(-(x * x + y * y) / w);
            }
    }

    enforce_bc(f, c);
    if (c.bc == BcMode::channel_inflow) {
        double in = 0, out = 0;
        for (std::size_t j = 0; j < ny; ++j) in += f.u(j, 0), out += f.u(j, nx);
        const double shift = (in - out) / double(ny);
        for (std::size_t j = 0; j < ny; ++j) f.u(j, nx) += shift;
    }
    projector_.project(f, dt);
    enforce_bc(f, c);
    f.time += dt;

    StepStats s;
    const Matrix d = divergence(f.u, f.v, dx, dy);
    for (std::size_t k = 0; k < d.size(); ++k)
        if (far_[k]) s.max_divergence = std::max(s.max_divergence, std::abs(d.flat()[k]));
    double umax = 0, vmax = 0;
    for (double x : f.u.flat()) umax = std::max(umax, std::abs(x));
    for (double x : f.v.flat()) vmax = std::max(vmax, std::abs(x));
    s.cfl = dt * std::max(umax / dx, vmax / dy);
    if (!std::isfinite(s.cfl) || !std::isfinite(s.max_divergence)) {
        throw NumericError("cfd: non-finite velocity at t = " + std::to_string(f.time));
    }
    if (s.cfl >= 1.0) {
        std::ostringstream os;
        os << "cfd: CFL number " << s.cfl << " >= 1 at t = " << f.time << "; reduce dt";
        throw NumericError(os.str());
    }
    return s;
}

SimulationResult simulate(const FlowConfig& c, const SnapshotSink& sink) {
    Simulator sim(c);
    SimulationResult r;
    const std::size_t n = c.steps();
    const auto pj = std::min(c.ny - 1, std::size_t(c.probe_y / c.dy()));
    const auto pi = std::min(c.nx - 1, std::size_t(c.probe_x / c.dx()));
    for (std::size_t k = 1; k <= n; ++k) {
        const StepStats s = sim.step();
        r.max_divergence = std::max(r.max_divergence, s.max_divergence);
        r.max_cfl = std::max(r.max_cfl, s.cfl);
        const FlowField& f = sim.field();
        if (f.time + 1e-9 < c.record_from) continue;
        const Forces fc = force_coefficients(f, c);
        r.times.push_back(f.time);
        r.cd.push_back(fc.cd);
        r.cl.push_back(fc.cl);
        const bool snap = k % c.snapshot_every == 0;
        Matrix w;
        if (snap) w = vorticity(f, c);
        if (snap) {
            r.probe.push_back(w(pj, pi));
            r.snapshot_times.push_back(f.time);
            r.snapshot_steps.push_back(k);
            if (sink) sink(k, f.time, w);
            else r.snapshots.push_back(std::move(w));
        }
    }
    r.steps = n;
    return r;
}

}  // namespace flowmixer::cfd
