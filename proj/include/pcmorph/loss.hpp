#pragma once

#include "pcmorph/autodiff.hpp"
#include "pcmorph/geom.hpp"
#include "pcmorph/metrics.hpp"
#include "pcmorph/model.hpp"

namespace pcmorph {

// Edge-distortion penalty form. Squared (default) penalizes both stretching
// and compression:  sum_i sum_{j in N(i)} (||pi-pj||^2 - ||phi(pi)-phi(pj)||^2)^2.
// Raw keeps the literal signed difference for comparison experiments.
enum class TopoForm { Squared, Raw };

std::string topo_form_name(TopoForm f);
TopoForm topo_form_from_name(const std::string& name);

struct LossBreakdown {
  double total = 0.0;
  double chamfer = 0.0;
  double topology = 0.0;
  double lambda = 0.0;  // weight applied to the topology term
};

// Edge-length distortion between x0 and its image xT over the neighbor
// graph, normalized by the number of directed edge terms (each undirected
// edge is counted once per endpoint). Identity and pure translations give
// exactly 0; rigid rotations give ~1e-9.
double topology_term(const PointCloud& x0, const PointCloud& xT,
                     const NeighborGraph& graph,
                     TopoForm form = TopoForm::Squared);

// total = chamfer(frames[T], xb) + lambda * topology(frames[0], frames[T]).
// Intermediate frames contribute nothing. Plain evaluation; bit-identical
// to the tape route used in training.
LossBreakdown total_loss(const Trajectory& traj, const PointCloud& xb,
                         const NeighborGraph& graph, double lambda,
                         TopoForm form = TopoForm::Squared);

// ---- tape route -----------------------------------------------------------

struct LossNodes {
  ad::ValueId total;
  ad::ValueId chamfer;
  ad::ValueId topology;
  LossBreakdown breakdown;
};

// Chamfer with fixed nearest-neighbor assignments (piecewise-constant;
// recomputed every forward pass, frozen during backward).
ad::ValueId chamfer_on_tape(ad::Tape& tape, ad::ValueId a, ad::ValueId b,
                            const ChamferResult& assign);

ad::ValueId topology_on_tape(ad::Tape& tape, const PointCloud& x0,
                             ad::ValueId xT, const NeighborGraph& graph,
                             TopoForm form);

// Builds the full objective on the tape. `frozen` supplies the chamfer
// assignments; when null they are computed from the current value of xT
// (the normal training path). x0 is the source cloud (frames[0], constant).
LossNodes total_loss_on_tape(ad::Tape& tape, ad::ValueId xT,
                             ad::ValueId xb_leaf, const PointCloud& x0,
                             const PointCloud& xb, const NeighborGraph& graph,
                             double lambda, TopoForm form,
                             const ChamferResult* frozen = nullptr);

}  // namespace pcmorph
