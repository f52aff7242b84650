#include "rdt/grad.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rdt {

namespace {

void add_scaled_vec(Vec& dst, const Vec& src, double s) {
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += s * src[i];
}

// Parameter-only leaf outputs, shared across all steps of a gradient pass.
struct LeafConsts {
  std::vector<Vec> action;  // softmax(theta_a) per node id
  std::vector<Vec> zpred;   // tanh(theta_z) per node id
};

LeafConsts leaf_consts(const TreePolicy& policy) {
  LeafConsts c;
  c.action.resize(policy.topo.node_count());
  c.zpred.resize(policy.topo.node_count());
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (!policy.topo.nodes[id].is_leaf()) continue;
    c.action[id] = leaf_action_distribution(policy.leaf[id]);
    Vec z(policy.obs_dim);
    for (int i = 0; i < policy.obs_dim; ++i) z[i] = std::tanh(policy.leaf[id].theta_z[i]);
    c.zpred[id] = std::move(z);
  }
  return c;
}

// Everything the backward pass needs from one evaluation of the tree.
struct EvalCache {
  Vec x;        // [h; z_norm]
  Vec gate;     // per node id (inner only)
  Vec node_p;   // per node id
  Vec hist_factor;                // SoftAnd: history sigmoid per inner node
  std::vector<Vec> and_factors;   // SoftAnd: per-dimension sigmoids per inner node
  std::vector<Vec> leaf_hist;     // per node id (leaf only): H^l
  Vec action_dist;
  Vec h_next;
  Vec z_pred;
};

void forward_eval(const TreePolicy& policy, const LeafConsts& consts, const Vec& h, const Vec& z_norm,
                  EvalCache& cache) {
  const int n = policy.topo.node_count();
  const int m = policy.history_dim;

  cache.x.assign(policy.input_dim(), 0.0);
  std::copy(h.begin(), h.end(), cache.x.begin());
  std::copy(z_norm.begin(), z_norm.end(), cache.x.begin() + m);

  cache.gate.assign(n, 0.0);
  cache.node_p.assign(n, 0.0);
  cache.node_p[policy.topo.root] = 1.0;
  if (policy.gating == GatingKind::SoftAnd) {
    cache.hist_factor.assign(n, 1.0);
    cache.and_factors.assign(n, Vec());
  }
  for (int id = 0; id < n; ++id) {
    const auto& node = policy.topo.nodes[id];
    if (node.is_leaf()) continue;
    double g;
    if (policy.gating == GatingKind::Dense) {
      g = sigmoid(dot(policy.inner[id].w, cache.x) + policy.inner[id].b);
    } else {
      const InnerParams& ip = policy.inner[id];
      double fh = 1.0;
      if (m > 0) {
        double s = ip.b;
        for (int i = 0; i < m; ++i) s += ip.w[i] * cache.x[i];
        fh = sigmoid(s);
      }
      Vec factors(policy.obs_dim);
      g = fh;
      for (int i = 0; i < policy.obs_dim; ++i) {
        factors[i] = sigmoid(cache.x[m + i] * ip.w[m + i] + ip.axis_b[i]);
        g *= factors[i];
      }
      cache.hist_factor[id] = fh;
      cache.and_factors[id] = std::move(factors);
    }
    cache.gate[id] = g;
    cache.node_p[node.right] = cache.node_p[id] * g;
    cache.node_p[node.left] = cache.node_p[id] * (1.0 - g);
  }

  cache.leaf_hist.assign(n, Vec());
  cache.action_dist.assign(policy.action_count, 0.0);
  cache.h_next.assign(m, 0.0);
  cache.z_pred.assign(policy.obs_dim, 0.0);
  for (int id = 0; id < n; ++id) {
    if (!policy.topo.nodes[id].is_leaf()) continue;
    const double p = cache.node_p[id];
    add_scaled_vec(cache.action_dist, consts.action[id], p);
    cache.leaf_hist[id] = leaf_history(policy.leaf[id], policy.recurrence, h, z_norm);
    add_scaled_vec(cache.h_next, cache.leaf_hist[id], p);
    add_scaled_vec(cache.z_pred, consts.zpred[id], p);
  }
}

struct Upstream {
  double ce_weight = 0.0;         // weight of the per-leaf cross-entropy term
  int target = -1;                // target class for the cross-entropy
  const Vec* u_action = nullptr;  // dL/d action_dist
  const Vec* u_h = nullptr;       // dL/d h_next
  const Vec* u_z = nullptr;       // dL/d z_pred
  const Vec* dp_extra = nullptr;  // per-node additions to dL/dP^n (split term)
  const Vec* dg_extra = nullptr;  // per-node additions to dL/dg_n (split term)
};

// Accumulates parameter gradients of one evaluation into `g` and the input
// gradients into dh (length M) and dz (length D).
void backward_eval(const TreePolicy& policy, const LeafConsts& consts, const EvalCache& cache,
                   const Upstream& up, GradBuffer& g, Vec& dh, Vec& dz) {
  const int n = policy.topo.node_count();
  const int m = policy.history_dim;
  const int d = policy.obs_dim;

  Vec dP(n, 0.0);

  for (int id = 0; id < n; ++id) {
    if (!policy.topo.nodes[id].is_leaf()) continue;
    const double p = cache.node_p[id];
    const Vec& a = consts.action[id];
    const Vec& zp = consts.zpred[id];

    double dp = 0.0;
    if (up.ce_weight != 0.0) dp -= up.ce_weight * clamped_log(a[up.target]);
    if (up.u_action) dp += dot(*up.u_action, a);
    if (up.u_z) dp += dot(*up.u_z, zp);
    if (up.u_h && m > 0) dp += dot(*up.u_h, cache.leaf_hist[id]);
    dP[id] = dp;

    LeafParams& lg = g.leaf[id];
    if (up.ce_weight != 0.0 && a[up.target] >= 1e-12) {
      const double w = up.ce_weight * p;
      for (int k = 0; k < policy.action_count; ++k) {
        lg.theta_a[k] += w * (a[k] - (k == up.target ? 1.0 : 0.0));
      }
    }
    if (up.u_action) {
      const double mean = dot(*up.u_action, a);
      for (int k = 0; k < policy.action_count; ++k) {
        lg.theta_a[k] += p * a[k] * ((*up.u_action)[k] - mean);
      }
    }
    if (up.u_z) {
      for (int i = 0; i < d; ++i) lg.theta_z[i] += p * (*up.u_z)[i] * (1.0 - zp[i] * zp[i]);
    }
    if (up.u_h && m > 0) {
      const Vec& H = cache.leaf_hist[id];
      if (policy.recurrence == Recurrence::FixedSoftmax) {
        double mean = 0.0;
        for (int i = 0; i < m; ++i) mean += p * (*up.u_h)[i] * H[i];
        for (int i = 0; i < m; ++i) lg.theta_h[i] += H[i] * (p * (*up.u_h)[i] - mean);
      } else {
        const LeafParams& lp = policy.leaf[id];
        for (int i = 0; i < m; ++i) {
          const double dpre = p * (*up.u_h)[i] * (1.0 - H[i] * H[i]);
          lg.theta_h[i] += dpre;
          switch (policy.recurrence) {
            case Recurrence::VecHist:
            case Recurrence::RnnVecHist:
              lg.theta_r[i] += dpre * cache.x[i];
              dh[i] += dpre * lp.theta_r[i];
              break;
            case Recurrence::MatrixHist:
            case Recurrence::Rnn:
              for (int j = 0; j < m; ++j) {
                lg.theta_rm.at(i, j) += dpre * cache.x[j];
                dh[j] += dpre * lp.theta_rm.at(i, j);
              }
              break;
            default:
              break;
          }
          switch (policy.recurrence) {
            case Recurrence::MatrixObs:
            case Recurrence::RnnVecHist:
            case Recurrence::Rnn:
              for (int j = 0; j < d; ++j) {
                lg.theta_f.at(i, j) += dpre * cache.x[m + j];
                dz[j] += dpre * lp.theta_f.at(i, j);
              }
              break;
            default:
              break;
          }
        }
      }
    }
  }

  // Children carry larger ids, so a reverse sweep finalizes dP bottom-up.
  for (int id = n - 1; id >= 0; --id) {
    const auto& node = policy.topo.nodes[id];
    if (node.is_leaf()) continue;
    const double gate = cache.gate[id];
    const double p = cache.node_p[id];
    double dgate = p * (dP[node.right] - dP[node.left]);
    if (up.dg_extra) dgate += (*up.dg_extra)[id];
    dP[id] += (1.0 - gate) * dP[node.left] + gate * dP[node.right];
    if (up.dp_extra) dP[id] += (*up.dp_extra)[id];

    InnerParams& ig = g.inner[id];
    const InnerParams& ip = policy.inner[id];
    if (policy.gating == GatingKind::Dense) {
      const double ds = dgate * gate * (1.0 - gate);
      for (int i = 0; i < m; ++i) {
        ig.w[i] += ds * cache.x[i];
        dh[i] += ds * ip.w[i];
      }
      for (int i = 0; i < d; ++i) {
        ig.w[m + i] += ds * cache.x[m + i];
        dz[i] += ds * ip.w[m + i];
      }
      ig.b += ds;
    } else {
      const Vec& factors = cache.and_factors[id];
      const double fh = cache.hist_factor[id];
      // prefix/suffix products to avoid dividing by near-zero factors
      Vec pre(d, 1.0), suf(d, 1.0);
      for (int i = 1; i < d; ++i) pre[i] = pre[i - 1] * factors[i - 1];
      for (int i = d - 2; i >= 0; --i) suf[i] = suf[i + 1] * factors[i + 1];
      const double prod_z = d > 0 ? pre[d - 1] * factors[d - 1] : 1.0;
      if (m > 0) {
        const double dfh = dgate * prod_z;
        const double ds = dfh * fh * (1.0 - fh);
        for (int i = 0; i < m; ++i) {
          ig.w[i] += ds * cache.x[i];
          dh[i] += ds * ip.w[i];
        }
        ig.b += ds;
      }
      for (int i = 0; i < d; ++i) {
        const double dfi = dgate * fh * pre[i] * suf[i];
        const double ds = dfi * factors[i] * (1.0 - factors[i]);
        ig.w[m + i] += ds * cache.x[m + i];
        ig.axis_b[i] += ds;
        dz[i] += ds * ip.w[m + i];
      }
    }
  }
}

LeafParams zero_leaf_like(const LeafParams& p) {
  LeafParams z;
  z.theta_a.assign(p.theta_a.size(), 0.0);
  z.theta_h.assign(p.theta_h.size(), 0.0);
  z.theta_z.assign(p.theta_z.size(), 0.0);
  z.theta_r.assign(p.theta_r.size(), 0.0);
  z.theta_rm = Mat(p.theta_rm.rows, p.theta_rm.cols);
  z.theta_f = Mat(p.theta_f.rows, p.theta_f.cols);
  return z;
}

InnerParams zero_inner_like(const InnerParams& p) {
  InnerParams z;
  z.w.assign(p.w.size(), 0.0);
  z.b = 0.0;
  z.axis_b.assign(p.axis_b.size(), 0.0);
  return z;
}

void check_finite(const TreePolicy& policy, const GradBuffer& g) {
  auto bad = [](const Vec& v) {
    for (double x : v) {
      if (!std::isfinite(x)) return true;
    }
    return false;
  };
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      const LeafParams& lf = g.leaf[id];
      if (bad(lf.theta_a) || bad(lf.theta_h) || bad(lf.theta_z) || bad(lf.theta_r) ||
          bad(lf.theta_rm.data) || bad(lf.theta_f.data)) {
        throw NumericError("non-finite gradient at leaf node " + std::to_string(id));
      }
    } else {
      if (bad(g.inner[id].w) || !std::isfinite(g.inner[id].b) || bad(g.inner[id].axis_b)) {
        throw NumericError("non-finite gradient at inner node " + std::to_string(id));
      }
    }
  }
}

}  // namespace

void GradBuffer::add_scaled(const GradBuffer& other, double s) {
  for (size_t id = 0; id < inner.size(); ++id) {
    add_scaled_vec(inner[id].w, other.inner[id].w, s);
    inner[id].b += s * other.inner[id].b;
    add_scaled_vec(inner[id].axis_b, other.inner[id].axis_b, s);
    add_scaled_vec(leaf[id].theta_a, other.leaf[id].theta_a, s);
    add_scaled_vec(leaf[id].theta_h, other.leaf[id].theta_h, s);
    add_scaled_vec(leaf[id].theta_z, other.leaf[id].theta_z, s);
    add_scaled_vec(leaf[id].theta_r, other.leaf[id].theta_r, s);
    add_scaled_vec(leaf[id].theta_rm.data, other.leaf[id].theta_rm.data, s);
    add_scaled_vec(leaf[id].theta_f.data, other.leaf[id].theta_f.data, s);
  }
}

void GradBuffer::scale(double s) {
  for (size_t id = 0; id < inner.size(); ++id) {
    for (double& v : inner[id].w) v *= s;
    inner[id].b *= s;
    for (double& v : inner[id].axis_b) v *= s;
    for (double& v : leaf[id].theta_a) v *= s;
    for (double& v : leaf[id].theta_h) v *= s;
    for (double& v : leaf[id].theta_z) v *= s;
    for (double& v : leaf[id].theta_r) v *= s;
    for (double& v : leaf[id].theta_rm.data) v *= s;
    for (double& v : leaf[id].theta_f.data) v *= s;
  }
}

GradBuffer zero_grads(const TreePolicy& policy) {
  GradBuffer g;
  g.inner.resize(policy.topo.node_count());
  g.leaf.resize(policy.topo.node_count());
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      g.leaf[id] = zero_leaf_like(policy.leaf[id]);
    } else {
      g.inner[id] = zero_inner_like(policy.inner[id]);
    }
  }
  return g;
}

GradientResult trajectory_gradient(const TreePolicy& policy, const Trajectory& traj,
                                   const TrainingConfig& config) {
  const size_t len = traj.length();
  if (len == 0) throw DataError("cannot differentiate an empty trajectory");
  const int n = policy.topo.node_count();
  const int m = policy.history_dim;
  const int d = policy.obs_dim;
  const double inv_len = 1.0 / static_cast<double>(len);

  const LeafConsts consts = leaf_consts(policy);

  // Forward pass: main chain, then one extra evaluation per evolution step.
  std::vector<Vec> z_norms(len);
  for (size_t t = 0; t < len; ++t) z_norms[t] = normalize_obs(policy, traj.observations[t]);

  std::vector<EvalCache> steps(len);
  Vec h = policy.zero_history();
  for (size_t t = 0; t < len; ++t) {
    forward_eval(policy, consts, h, z_norms[t], steps[t]);
    h = steps[t].h_next;
  }
  std::vector<EvalCache> kl_steps(len > 0 ? len - 1 : 0);
  for (size_t t = 0; t + 1 < len; ++t) {
    forward_eval(policy, consts, steps[t].h_next, steps[t].z_pred, kl_steps[t]);
  }

  GradientResult result;
  result.grads = zero_grads(policy);
  LossBreakdown& loss = result.loss;

  // Loss values (mirrors trajectory_loss).
  for (size_t t = 0; t < len; ++t) {
    const int target = traj.actions[t];
    switch (config.action_loss) {
      case ActionLossKind::PerLeaf:
        for (int id = 0; id < n; ++id) {
          if (!policy.topo.nodes[id].is_leaf()) continue;
          loss.action_loss -= steps[t].node_p[id] * clamped_log(consts.action[id][target]);
        }
        break;
      case ActionLossKind::Mixture:
        loss.action_loss -= clamped_log(steps[t].action_dist[target]);
        break;
      case ActionLossKind::MaxLeaf: {
        int best = -1;
        double best_p = -1.0;
        for (int id = 0; id < n; ++id) {
          if (!policy.topo.nodes[id].is_leaf()) continue;
          if (steps[t].node_p[id] > best_p) {
            best_p = steps[t].node_p[id];
            best = id;
          }
        }
        loss.action_loss -= clamped_log(consts.action[best][target]);
        break;
      }
    }
  }
  for (size_t t = 0; t + 1 < len; ++t) {
    for (int i = 0; i < d; ++i) {
      const double diff = z_norms[t + 1][i] - steps[t].z_pred[i];
      loss.evolution_mse += diff * diff;
    }
    const Vec& q = steps[t + 1].action_dist;
    const Vec& p = kl_steps[t].action_dist;
    for (int k = 0; k < policy.action_count; ++k) {
      if (q[k] <= 0.0) continue;
      loss.evolution_kl += q[k] * (std::log(q[k]) - clamped_log(p[k]));
    }
  }
  loss.action_loss *= inv_len;
  loss.evolution_mse *= inv_len;
  loss.evolution_kl *= inv_len;

  // Split regularizer: per-node gate mass over the main-chain steps.
  Vec total_mass(n, 0.0), gate_mass(n, 0.0), alpha(n, 0.0), dloss_dalpha(n, 0.0);
  if (config.lambda != 0.0) {
    for (size_t t = 0; t < len; ++t) {
      for (int id = 0; id < n; ++id) {
        if (policy.topo.nodes[id].is_leaf()) continue;
        total_mass[id] += steps[t].node_p[id];
        gate_mass[id] += steps[t].node_p[policy.topo.nodes[id].right];
      }
    }
    for (int id = 0; id < n; ++id) {
      if (policy.topo.nodes[id].is_leaf() || total_mass[id] <= 0.0) continue;
      const double raw = gate_mass[id] / total_mass[id];
      const double a = std::min(std::max(raw, 1e-6), 1.0 - 1e-6);
      alpha[id] = a;
      const double decay = std::pow(2.0, -policy.topo.nodes[id].depth);
      loss.split_loss -= config.lambda * decay * (0.5 * std::log(a) + 0.5 * std::log(1.0 - a));
      if (raw > 1e-6 && raw < 1.0 - 1e-6) {
        dloss_dalpha[id] = -config.lambda * decay * (0.5 / a - 0.5 / (1.0 - a));
      }
    }
  }
  loss.l1_loss = l1_penalty(policy);
  loss.total = loss.action_loss + config.delta1 * loss.evolution_mse +
               config.delta2 * loss.evolution_kl + loss.split_loss +
               config.l1_weight * loss.l1_loss;

  // Backward sweep, newest step first, carrying dL/dh through time.
  Vec carry_h(m, 0.0);
  Vec dp_extra(n, 0.0), dg_extra(n, 0.0);
  Vec u_action(policy.action_count, 0.0);
  Vec u_h(m, 0.0), u_z(d, 0.0);
  Vec scratch_h(m, 0.0), scratch_z(d, 0.0);

  for (size_t ti = len; ti-- > 0;) {
    const size_t t = ti;
    std::fill(u_h.begin(), u_h.end(), 0.0);
    std::fill(u_z.begin(), u_z.end(), 0.0);
    for (int i = 0; i < m; ++i) u_h[i] = carry_h[i];

    if (t + 1 < len) {
      // Evolution KL branch: evaluation at (h_{t+1}, z_pred_t).
      const Vec& q = steps[t + 1].action_dist;
      const Vec& p = kl_steps[t].action_dist;
      std::fill(u_action.begin(), u_action.end(), 0.0);
      const double w_kl = config.delta2 * inv_len;
      for (int k = 0; k < policy.action_count; ++k) {
        if (q[k] <= 0.0 || p[k] < 1e-12) continue;
        u_action[k] = -w_kl * q[k] / p[k];
      }
      Upstream up;
      up.u_action = &u_action;
      std::fill(scratch_h.begin(), scratch_h.end(), 0.0);
      std::fill(scratch_z.begin(), scratch_z.end(), 0.0);
      backward_eval(policy, consts, kl_steps[t], up, result.grads, scratch_h, scratch_z);
      for (int i = 0; i < m; ++i) u_h[i] += scratch_h[i];
      for (int i = 0; i < d; ++i) u_z[i] += scratch_z[i];
      // Evolution MSE on z_pred.
      const double w_mse = config.delta1 * inv_len;
      for (int i = 0; i < d; ++i) {
        u_z[i] += w_mse * 2.0 * (steps[t].z_pred[i] - z_norms[t + 1][i]);
      }
    }

    // Split contributions tied to this step's path and gate probabilities.
    const bool has_split = config.lambda != 0.0;
    if (has_split) {
      for (int id = 0; id < n; ++id) {
        dp_extra[id] = 0.0;
        dg_extra[id] = 0.0;
        if (policy.topo.nodes[id].is_leaf() || dloss_dalpha[id] == 0.0) continue;
        const double s = total_mass[id];
        dp_extra[id] = dloss_dalpha[id] * (steps[t].gate[id] - alpha[id]) / s;
        dg_extra[id] = dloss_dalpha[id] * steps[t].node_p[id] / s;
      }
    }

    Upstream up;
    up.u_h = &u_h;
    up.u_z = &u_z;
    if (has_split) {
      up.dp_extra = &dp_extra;
      up.dg_extra = &dg_extra;
    }
    const int target = traj.actions[t];
    switch (config.action_loss) {
      case ActionLossKind::PerLeaf:
        up.ce_weight = inv_len;
        up.target = target;
        break;
      case ActionLossKind::Mixture: {
        std::fill(u_action.begin(), u_action.end(), 0.0);
        if (steps[t].action_dist[target] >= 1e-12) {
          u_action[target] = -inv_len / steps[t].action_dist[target];
        }
        up.u_action = &u_action;
        break;
      }
      case ActionLossKind::MaxLeaf: {
        int best = -1;
        double best_p = -1.0;
        for (int id = 0; id < n; ++id) {
          if (!policy.topo.nodes[id].is_leaf()) continue;
          if (steps[t].node_p[id] > best_p) {
            best_p = steps[t].node_p[id];
            best = id;
          }
        }
        // Leaf selection is treated as constant.
        if (consts.action[best][target] >= 1e-12) {
          for (int k = 0; k < policy.action_count; ++k) {
            result.grads.leaf[best].theta_a[k] +=
                inv_len * (consts.action[best][k] - (k == target ? 1.0 : 0.0));
          }
        }
        break;
      }
    }

    std::fill(scratch_h.begin(), scratch_h.end(), 0.0);
    std::fill(scratch_z.begin(), scratch_z.end(), 0.0);
    backward_eval(policy, consts, steps[t], up, result.grads, scratch_h, scratch_z);
    carry_h = scratch_h;
  }

  // L1 subgradient on gate weights, sign(0) = 0.
  if (config.l1_weight != 0.0) {
    for (int id = 0; id < n; ++id) {
      if (policy.topo.nodes[id].is_leaf()) continue;
      for (size_t i = 0; i < policy.inner[id].w.size(); ++i) {
        const double w = policy.inner[id].w[i];
        if (w > 0.0) {
          result.grads.inner[id].w[i] += config.l1_weight;
        } else if (w < 0.0) {
          result.grads.inner[id].w[i] -= config.l1_weight;
        }
      }
    }
  }
  return result;
}

namespace {

GradientResult reduce_results(const TreePolicy& policy, std::vector<GradientResult>& parts,
                              const TrainingConfig& config) {
  GradientResult out;
  out.grads = zero_grads(policy);
  const double inv = 1.0 / static_cast<double>(parts.size());
  for (auto& part : parts) {
    out.grads.add_scaled(part.grads, 1.0);
    out.loss += part.loss;
  }
  out.grads.scale(inv);
  out.loss.scale(inv);
  out.loss.total = out.loss.action_loss + config.delta1 * out.loss.evolution_mse +
                   config.delta2 * out.loss.evolution_kl + out.loss.split_loss +
                   config.l1_weight * out.loss.l1_loss;
  check_finite(policy, out.grads);
  return out;
}

}  // namespace

GradientResult compute_gradients_serial(const TreePolicy& policy, const Dataset& batch,
                                        const TrainingConfig& config) {
  if (batch.empty()) throw DataError("cannot differentiate an empty batch");
  std::vector<GradientResult> parts(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    parts[i] = trajectory_gradient(policy, batch[i], config);
  }
  return reduce_results(policy, parts, config);
}

GradientResult compute_gradients(const TreePolicy& policy, const Dataset& data,
                                 const std::vector<int>& indices, const TrainingConfig& config) {
  if (indices.empty()) throw DataError("cannot differentiate an empty batch");
  std::vector<GradientResult> parts(indices.size());
  std::string error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (long i = 0; i < static_cast<long>(indices.size()); ++i) {
    try {
      parts[i] = trajectory_gradient(policy, data[indices[i]], config);
    } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (error.empty()) error = e.what();
    }
  }
  if (!error.empty()) throw NumericError(error);
  // Fixed-order reduction: bitwise identical to the serial reference.
  return reduce_results(policy, parts, config);
}

GradientResult compute_gradients(const TreePolicy& policy, const Dataset& batch,
                                 const TrainingConfig& config) {
  std::vector<int> indices(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) indices[i] = static_cast<int>(i);
  return compute_gradients(policy, batch, indices, config);
}

Vec flatten_params(const TreePolicy& policy) {
  Vec flat;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      const LeafParams& lf = policy.leaf[id];
      flat.insert(flat.end(), lf.theta_a.begin(), lf.theta_a.end());
      flat.insert(flat.end(), lf.theta_h.begin(), lf.theta_h.end());
      flat.insert(flat.end(), lf.theta_z.begin(), lf.theta_z.end());
      flat.insert(flat.end(), lf.theta_r.begin(), lf.theta_r.end());
      flat.insert(flat.end(), lf.theta_rm.data.begin(), lf.theta_rm.data.end());
      flat.insert(flat.end(), lf.theta_f.data.begin(), lf.theta_f.data.end());
    } else {
      const InnerParams& ip = policy.inner[id];
      flat.insert(flat.end(), ip.w.begin(), ip.w.end());
      flat.push_back(ip.b);
      flat.insert(flat.end(), ip.axis_b.begin(), ip.axis_b.end());
    }
  }
  return flat;
}

void unflatten_params(TreePolicy& policy, const Vec& flat) {
  size_t pos = 0;
  auto take = [&](Vec& dst) {
    for (double& v : dst) v = flat[pos++];
  };
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      LeafParams& lf = policy.leaf[id];
      take(lf.theta_a);
      take(lf.theta_h);
      take(lf.theta_z);
      take(lf.theta_r);
      take(lf.theta_rm.data);
      take(lf.theta_f.data);
    } else {
      InnerParams& ip = policy.inner[id];
      take(ip.w);
      ip.b = flat[pos++];
      take(ip.axis_b);
    }
  }
  if (pos != flat.size()) throw StructuralError("flat parameter vector has wrong length");
}

Vec flatten_grads(const TreePolicy& policy, const GradBuffer& grads) {
  Vec flat;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    if (policy.topo.nodes[id].is_leaf()) {
      const LeafParams& lf = grads.leaf[id];
      flat.insert(flat.end(), lf.theta_a.begin(), lf.theta_a.end());
      flat.insert(flat.end(), lf.theta_h.begin(), lf.theta_h.end());
      flat.insert(flat.end(), lf.theta_z.begin(), lf.theta_z.end());
      flat.insert(flat.end(), lf.theta_r.begin(), lf.theta_r.end());
      flat.insert(flat.end(), lf.theta_rm.data.begin(), lf.theta_rm.data.end());
      flat.insert(flat.end(), lf.theta_f.data.begin(), lf.theta_f.data.end());
    } else {
      const InnerParams& ip = grads.inner[id];
      flat.insert(flat.end(), ip.w.begin(), ip.w.end());
      flat.push_back(ip.b);
      flat.insert(flat.end(), ip.axis_b.begin(), ip.axis_b.end());
    }
  }
  return flat;
}

std::vector<std::pair<size_t, size_t>> node_param_spans(const TreePolicy& policy) {
  std::vector<std::pair<size_t, size_t>> spans(policy.topo.node_count());
  size_t pos = 0;
  for (int id = 0; id < policy.topo.node_count(); ++id) {
    const size_t begin = pos;
    if (policy.topo.nodes[id].is_leaf()) {
      const LeafParams& lf = policy.leaf[id];
      pos += lf.theta_a.size() + lf.theta_h.size() + lf.theta_z.size() + lf.theta_r.size() +
             lf.theta_rm.size() + lf.theta_f.size();
    } else {
      pos += policy.inner[id].w.size() + 1 + policy.inner[id].axis_b.size();
    }
    spans[id] = {begin, pos};
  }
  return spans;
}

}  // namespace rdt
