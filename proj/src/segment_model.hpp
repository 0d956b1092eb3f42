#pragma once

// Cost of one straight segment of a path as a function of its duration.
//
// For a segment from state a to state b travelled in time tau the drift is
// (b - a) / tau and the cost is tau * integral_0^1 L(a + u (b - a), (b - a) / tau) du.
// The face is constant on the open segment and the service rates only depend on
// the position, so the quadrature nodes and mu_r(x(u)) are computed once and the
// duration can be varied cheaply.

#include <span>
#include <vector>

#include "starld/cost.hpp"
#include "starld/model.hpp"
#include "starld/paths.hpp"
#include "starld/rate.hpp"

namespace starld::detail {

/// 16-node Gauss-Legendre on [-1, 1], positive half (symmetric).
inline constexpr double kGaussLegendre16[8][2] = {
    {0.095012509837637454, 0.18945061045506859}, {0.28160355077925892, 0.18260341504492361},
    {0.45801677765722737, 0.16915651939500262},  {0.61787624440264377, 0.14959598881657676},
    {0.755404408355003, 0.12462897125553403},    {0.86563120238783176, 0.095158511682492591},
    {0.9445750230732326, 0.062253523938647706},  {0.98940093499164994, 0.027152459411754037},
};

class SegmentModel {
public:
    SegmentModel(const NetworkSpec& spec, std::span<const double> from, std::span<const double> to,
                 RateMode mode, const QuadratureOptions& quad = {});

    /// Segment cost when travelled in the given (positive) time.
    [[nodiscard]] Cost cost(double duration) const;

    /// d cost / d duration.
    [[nodiscard]] double slope(double duration) const;

    struct Optimum {
        double duration = 0.0;
        Cost cost;
        bool unbounded = false;  // cost keeps decreasing as the duration grows
    };
    /// The duration minimising cost(); the cost is convex in the duration.
    [[nodiscard]] Optimum optimal_duration() const;

    [[nodiscard]] bool stationary() const { return stationary_; }
    [[nodiscard]] const FacePartition& face() const { return face_; }

    struct Node {
        double u = 0.0;
        double weight = 0.0;
        std::vector<double> service;  // mu_r(x(u)) per occupied route
    };
    [[nodiscard]] const std::vector<Node>& nodes() const { return nodes_; }

private:
    void add_piece(const NetworkSpec& spec, double u0, double u1, double reference,
                   const QuadratureOptions& quad, int depth);
    [[nodiscard]] std::vector<Node> rule(const NetworkSpec& spec, double u0, double u1) const;
    [[nodiscard]] double integrate(const std::vector<Node>& nodes, double duration) const;

    std::vector<double> from_;
    std::vector<double> to_;
    std::vector<RouteIndex> occupied_;
    std::vector<double> lambda_;   // per occupied route
    std::vector<double> delta_;    // displacement per occupied route
    double constant_rate_ = 0.0;   // jammed cut cost plus free-block stay cost, per unit time
    bool stationary_ = false;
    FacePartition face_;
    std::vector<Node> nodes_;
};

}  // namespace starld::detail
