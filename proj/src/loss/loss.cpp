#include "pcmorph/loss.hpp"

#include "pcmorph/kernels.hpp"

namespace pcmorph {

std::string topo_form_name(TopoForm f) {
  return f == TopoForm::Squared ? "squared" : "raw";
}

TopoForm topo_form_from_name(const std::string& name) {
  if (name == "squared") return TopoForm::Squared;
  if (name == "raw") return TopoForm::Raw;
  throw InvalidArgument("unknown topology form '" + name +
                        "' (expected squared or raw)");
}

namespace {

// Directed edge list in the canonical order: i ascending, then N(i)
// ascending. Both evaluation routes iterate edges in exactly this order.
void collect_edges(const NeighborGraph& graph, std::vector<std::uint32_t>& ei,
                   std::vector<std::uint32_t>& ej) {
  for (std::size_t i = 0; i < graph.size(); ++i)
    for (std::uint32_t j : graph.neighbors(i)) {
      ei.push_back(static_cast<std::uint32_t>(i));
      ej.push_back(j);
    }
}

void check_topology_args(const PointCloud& x0, const PointCloud& xT,
                         const NeighborGraph& graph) {
  if (x0.size() != xT.size())
    throw InvalidArgument("topology_term: cloud sizes differ (" +
                          std::to_string(x0.size()) + " vs " +
                          std::to_string(xT.size()) + ")");
  if (graph.size() != x0.size())
    throw InvalidArgument("topology_term: graph size " +
                          std::to_string(graph.size()) +
                          " does not match cloud size " +
                          std::to_string(x0.size()));
}

}  // namespace

double topology_term(const PointCloud& x0, const PointCloud& xT,
                     const NeighborGraph& graph, TopoForm form) {
  check_topology_args(x0, xT, graph);
  std::vector<std::uint32_t> ei, ej;
  collect_edges(graph, ei, ej);
  if (ei.empty()) throw InvalidArgument("topology_term: graph has no edges");

  double acc = 0.0;
  for (std::size_t e = 0; e < ei.size(); ++e) {
    const Point3& pi = x0[ei[e]];
    const Point3& pj = x0[ej[e]];
    const Point3& qi = xT[ei[e]];
    const Point3& qj = xT[ej[e]];
    const double d2_src = kern::dist2(pi.x, pi.y, pi.z, pj.x, pj.y, pj.z);
    const double d2_out = kern::dist2(qi.x, qi.y, qi.z, qj.x, qj.y, qj.z);
    const double delta = d2_src - d2_out;
    acc += form == TopoForm::Squared ? delta * delta : delta;
  }
  return acc / static_cast<double>(ei.size());
}

LossBreakdown total_loss(const Trajectory& traj, const PointCloud& xb,
                         const NeighborGraph& graph, double lambda,
                         TopoForm form) {
  if (lambda < 0.0) throw InvalidArgument("total_loss: lambda must be >= 0");
  if (traj.frames.empty()) throw InvalidArgument("total_loss: empty trajectory");
  LossBreakdown out;
  out.lambda = lambda;
  out.chamfer = chamfer(traj.frames.back(), xb).value;
  out.topology = topology_term(traj.frames.front(), traj.frames.back(), graph,
                               form);
  out.total = out.chamfer + lambda * out.topology;
  return out;
}

ad::ValueId chamfer_on_tape(ad::Tape& tape, ad::ValueId a, ad::ValueId b,
                            const ChamferResult& assign) {
  const std::size_t n = tape.value(a).rows();
  const std::size_t m = tape.value(b).rows();
  if (assign.a_to_b.size() != n || assign.b_to_a.size() != m)
    throw InvalidArgument("chamfer_on_tape: assignment sizes do not match");

  // (1/n) sum_i ||a_i - b_{assign[i]}||^2, per-point squared norms summed in
  // ascending index order — the same accumulation the metrics module uses.
  const ad::ValueId a_diff =
      tape.sub(a, tape.gather_rows(b, assign.a_to_b));
  const ad::ValueId a_sum = tape.sum(tape.row_sums(tape.square(a_diff)));
  const ad::ValueId a_term =
      tape.div_scalar(a_sum, static_cast<double>(n));

  const ad::ValueId b_diff =
      tape.sub(b, tape.gather_rows(a, assign.b_to_a));
  const ad::ValueId b_sum = tape.sum(tape.row_sums(tape.square(b_diff)));
  const ad::ValueId b_term =
      tape.div_scalar(b_sum, static_cast<double>(m));

  return tape.add(a_term, b_term);
}

ad::ValueId topology_on_tape(ad::Tape& tape, const PointCloud& x0,
                             ad::ValueId xT, const NeighborGraph& graph,
                             TopoForm form) {
  check_topology_args(x0, tape.value(xT).to_cloud(), graph);
  std::vector<std::uint32_t> ei, ej;
  collect_edges(graph, ei, ej);
  if (ei.empty()) throw InvalidArgument("topology_term: graph has no edges");
  const std::size_t edges = ei.size();

  // Source edge lengths are constants.
  ad::Tensor d2_src(edges, 1);
  for (std::size_t e = 0; e < edges; ++e) {
    const Point3& pi = x0[ei[e]];
    const Point3& pj = x0[ej[e]];
    d2_src.data[e] = kern::dist2(pi.x, pi.y, pi.z, pj.x, pj.y, pj.z);
  }
  const ad::ValueId src = tape.leaf(std::move(d2_src));

  const ad::ValueId out_i = tape.gather_rows(xT, ei);
  const ad::ValueId out_j = tape.gather_rows(xT, ej);
  const ad::ValueId d2_out =
      tape.row_sums(tape.square(tape.sub(out_i, out_j)));
  ad::ValueId delta = tape.sub(src, d2_out);
  if (form == TopoForm::Squared) delta = tape.square(delta);
  return tape.div_scalar(tape.sum(delta), static_cast<double>(edges));
}

LossNodes total_loss_on_tape(ad::Tape& tape, ad::ValueId xT,
                             ad::ValueId xb_leaf, const PointCloud& x0,
                             const PointCloud& xb, const NeighborGraph& graph,
                             double lambda, TopoForm form,
                             const ChamferResult* frozen) {
  if (lambda < 0.0) throw InvalidArgument("total_loss: lambda must be >= 0");
  ChamferResult assign;
  if (frozen) {
    assign = *frozen;
  } else {
    assign = chamfer(tape.value(xT).to_cloud(), xb);
  }

  LossNodes nodes;
  nodes.chamfer = chamfer_on_tape(tape, xT, xb_leaf, assign);
  nodes.topology = topology_on_tape(tape, x0, xT, graph, form);
  nodes.total = tape.add(nodes.chamfer, tape.scale(nodes.topology, lambda));
  nodes.breakdown.lambda = lambda;
  nodes.breakdown.chamfer = tape.value(nodes.chamfer).data[0];
  nodes.breakdown.topology = tape.value(nodes.topology).data[0];
  nodes.breakdown.total = tape.value(nodes.total).data[0];
  return nodes;
}

}  // namespace pcmorph
