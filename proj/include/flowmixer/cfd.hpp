#pragma once

// 2-D incompressible Navier-Stokes around a cylinder on a staggered (MAC) grid:
// semi-Lagrangian advection (optionally MacCormack-corrected), Peaceman-Rachford
// ADI diffusion and a cosine-transform pressure projection.
//
// Layout (row j runs along y, column i along x):
//   u  ny x (nx+1)   at (i dx, (j+1/2) dy)
//   v  (ny+1) x nx   at ((i+1/2) dx, j dy)
//   p  ny x nx       at cell centres

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "flowmixer/config.hpp"
#include "flowmixer/linalg.hpp"

namespace flowmixer::cfd {

using linalg::Matrix;

enum class BcMode { channel_inflow, appendix_lid };
enum class AdvectionScheme { semi_lagrangian, maccormack };

std::string to_string(BcMode m);
BcMode parse_bc_mode(const std::string& s);
std::string to_string(AdvectionScheme s);
AdvectionScheme parse_advection(const std::string& s);

struct FlowConfig {
    double lx = 10.0;
    double ly = 4.0;
    std::size_t nx = 400;
    std::size_t ny = 160;
    double re = 150.0;
    double dt = 0.005;
    std::size_t snapshot_every = 20;
    double cx = 2.0;
    double cy = 2.0;
    double diameter = 1.0;
    BcMode bc = BcMode::channel_inflow;
    double total_time = 60.0;
    /// Inflow speed (channel) or lid speed (appendix_lid).
    double u_ref = 1.0;
    AdvectionScheme advection = AdvectionScheme::semi_lagrangian;
    /// Amplitude of the transient cross-flow kick that breaks the initial symmetry
    /// (channel mode only).
    double perturbation = 0.5;
    double perturbation_time = 1.0;
    /// Snapshots and force histories before this time are discarded.
    double record_from = 0.0;
    /// Wake probe position for the shedding-frequency cross-check.
    double probe_x = 4.0;
    double probe_y = 2.0;

    void validate() const;
    double dx() const { return lx / double(nx); }
    double dy() const { return ly / double(ny); }
    std::size_t steps() const;

    /// Reads the [cfd] section.
    static FlowConfig from_config(const Config& c, const std::string& section = "cfd");
    void to_config(Config& c, const std::string& section = "cfd") const;
};

/// Solid geometry on the staggered grid. A face is solid when either adjacent cell is.
struct Mask {
    std::vector<std::uint8_t> cell;    // ny x nx
    std::vector<std::uint8_t> u_face;  // ny x (nx+1)
    std::vector<std::uint8_t> v_face;  // (ny+1) x nx
    /// Cells at least `margin` cells away from every solid cell.
    std::vector<std::uint8_t> far_from_body(std::size_t ny, std::size_t nx, std::size_t margin) const;

    static Mask cylinder(const FlowConfig& c);
    static Mask none(std::size_t ny, std::size_t nx);
};

struct FlowField {
    Matrix u;
    Matrix v;
    Matrix p;
    Mask mask;
    double time = 0;

    static FlowField zeros(const FlowConfig& c);
    /// Uniform inflow outside the body (channel) or rest (lid).
    static FlowField initial(const FlowConfig& c);
};

/// Bilinear sample of a staggered component at physical (x, y). Offsets are in
/// cells: (0, 1/2) for u, (1/2, 0) for v, (1/2, 1/2) for centres. Positions
/// outside the grid are clamped.
double sample(const Matrix& f, double ox, double oy, double dx, double dy, double x, double y);

/// Semi-Lagrangian transport of both velocity components by the current velocity,
/// optionally with a limited MacCormack correction.
std::pair<Matrix, Matrix> advect(const FlowField& f, const FlowConfig& c, double dt);
/// Transport of a cell-centred scalar by a given staggered velocity field.
Matrix advect_scalar(const Matrix& s, const Matrix& u, const Matrix& v, double dx, double dy, double dt,
                     AdvectionScheme scheme);

/// Peaceman-Rachford step: (I - k Dxx) w = (I + k Dyy) u, (I - k Dyy) u' = (I + k Dxx) w,
/// with k = dt / (2 Re). Boundary values come from the active boundary mode and
/// boundary nodes are left untouched.
void adi_diffuse(Matrix& u, Matrix& v, const FlowConfig& c, double dt);

/// Discrete divergence at cell centres.
Matrix divergence(const Matrix& u, const Matrix& v, double dx, double dy);

/// Solves lap p = div(u*) / dt with Neumann boundaries and corrects interior faces.
/// Boundary faces keep their values. Returns p (zero mean).
class Projector {
public:
    explicit Projector(const FlowConfig& c);
    ~Projector();
    Projector(Projector&&) noexcept;
    Projector& operator=(Projector&&) noexcept;
    void project(FlowField& f, double dt);

private:
    std::unique_ptr<linalg::PoissonSolver> poisson_;
    double dx_, dy_;
};

void pressure_project(FlowField& f, const FlowConfig& c, double dt);

/// Imposes wall, inflow and lid values on boundary faces and zeroes solid faces.
void enforce_bc(FlowField& f, const FlowConfig& c);

/// Vorticity dv/dx - du/dy at cell centres: second-order central differences in the
/// interior, second-order one-sided at the edges, zero inside the body.
Matrix vorticity(const FlowField& f, const FlowConfig& c);

struct Forces {
    double cd = 0;
    double cl = 0;
};

/// Pressure plus viscous traction integrated over the staircase body surface,
/// normalised by u_ref^2 D / 2.
Forces force_coefficients(const FlowField& f, const FlowConfig& c);

struct StepStats {
    double max_divergence = 0;  // over cells at least two cells from the body
    double cfl = 0;
};

/// One full time step: advect, diffuse, set boundary values, project, enforce_bc.
class Simulator {
public:
    explicit Simulator(const FlowConfig& c);
    StepStats step();
    const FlowField& field() const { return field_; }
    FlowField& field() { return field_; }
    const FlowConfig& config() const { return cfg_; }

private:
    FlowConfig cfg_;
    FlowField field_;
    Projector projector_;
    std::vector<std::uint8_t> far_;
};

struct SimulationResult {
    std::vector<Matrix> snapshots;  // vorticity frames
    std::vector<double> snapshot_times;
    std::vector<std::size_t> snapshot_steps;
    std::vector<double> times;  // per recorded step
    std::vector<double> cd, cl, probe;
    double max_divergence = 0;
    double max_cfl = 0;
    std::size_t steps = 0;
};

using SnapshotSink = std::function<void(std::size_t step, double time, const Matrix& omega)>;

/// Runs to total_time. Snapshots are kept in the result unless a sink is given.
SimulationResult simulate(const FlowConfig& c, const SnapshotSink& sink = {});

}  // namespace flowmixer::cfd
