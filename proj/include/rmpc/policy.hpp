#pragma once

// Recurrent control policy. Every cycle re-reads (x0, r_c); the output of
// cycle c approximates the first optimal control of the c-step problem.
//
// Cell kinds
//   plain:  h = relu(W a + U h_prev + b)
//   gated:  z = sigmoid(Wz a + Uz h_prev + bz)           update gate
//           g = sigmoid(Wg a + Ug h_prev + bg)           reset gate
//           h~ = relu(Wh a + Uh (g .* h_prev) + bh)
//           h = (1 - z) .* h_prev + z .* h~
// Layer 1 reads a = input_scale .* [x0; r_c], layer j > 1 reads layer j-1's
// new hidden state. Output: y = output_scale .* tanh(Wy h_top + by).
//
// Parameter layout (flat vector, each matrix column-major), per layer:
//   W (G q x in), U (G q x q), b (G q) with G = 1 (plain) or 3 (gated) and
//   row blocks ordered [update; reset; candidate]; then Wy (m x q), by (m).

#include "rmpc/rng.hpp"
#include "rmpc/types.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rmpc {

enum class CellKind : std::uint8_t { plain = 0, gated = 1 };

inline std::string to_string(CellKind k) { return k == CellKind::plain ? "plain" : "gated"; }

inline CellKind parse_cell_kind(const std::string& s) {
  if (s == "plain" || s == "plain-rnn") return CellKind::plain;
  if (s == "gated" || s == "gru") return CellKind::gated;
  throw ConfigError("unknown cell kind '" + s + "'");
}

struct PolicyShape {
  CellKind cell = CellKind::gated;
  int layers = 4;
  int hidden = 128;
  int state_dim = 0;
  int ref_dim = 1;
  int output_dim = 1;
  Vec output_scale;  // length output_dim, > 0
  Vec input_scale;   // length state_dim + ref_dim; empty means all ones

  int input_dim() const { return state_dim + ref_dim; }
  int gates() const { return cell == CellKind::gated ? 3 : 1; }

  void validate() const {
    require(layers >= 1 && hidden >= 1 && state_dim >= 1 && ref_dim >= 1 && output_dim >= 1,
            "policy shape: dimensions must be positive");
    require(output_scale.size() == output_dim && (output_scale.array() > 0).all(),
            "policy shape: output_scale must be positive with one entry per output");
    require(input_scale.size() == 0 || input_scale.size() == input_dim(),
            "policy shape: input_scale must have one entry per input");
  }

  bool operator==(const PolicyShape& o) const {
    return cell == o.cell && layers == o.layers && hidden == o.hidden && state_dim == o.state_dim &&
           ref_dim == o.ref_dim && output_dim == o.output_dim && output_scale == o.output_scale &&
           effective_input_scale() == o.effective_input_scale();
  }

  Vec effective_input_scale() const {
    return input_scale.size() == 0 ? Vec::Ones(input_dim()) : input_scale;
  }

  std::string describe() const {
    std::string s = to_string(cell) + " layers=" + std::to_string(layers) +
                    " hidden=" + std::to_string(hidden) + " state=" + std::to_string(state_dim) +
                    " ref=" + std::to_string(ref_dim) + " out=" + std::to_string(output_dim);
    return s;
  }
};

// Offsets of one layer's blocks inside the flat parameter vector.
struct LayerLayout {
  int in = 0;
  std::size_t w = 0, u = 0, b = 0;
};

struct ParamLayout {
  std::vector<LayerLayout> layers;
  std::size_t wy = 0, by = 0, total = 0;

  explicit ParamLayout(const PolicyShape& s) {
    std::size_t off = 0;
    const std::size_t gq = static_cast<std::size_t>(s.gates() * s.hidden);
    for (int l = 0; l < s.layers; ++l) {
      LayerLayout ll;
      ll.in = l == 0 ? s.input_dim() : s.hidden;
      ll.w = off;
      off += gq * ll.in;
      ll.u = off;
      off += gq * s.hidden;
      ll.b = off;
      off += gq;
      layers.push_back(ll);
    }
    wy = off;
    off += static_cast<std::size_t>(s.output_dim * s.hidden);
    by = off;
    off += s.output_dim;
    total = off;
  }
};

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Per-layer hidden vectors.
using HiddenState = std::vector<Vec>;

// Values saved by a batched forward pass for the backward pass.
struct LayerTrace {
  Mat in;      // in x B
  Mat h_prev;  // q x B
  Mat gates;   // 2q x B (gated: update, reset), empty for plain
  Mat pre;     // q x B, candidate pre-activation
  Mat h;       // q x B
};

struct CycleTrace {
  std::vector<LayerTrace> layers;
  Mat tanh_out;  // m x B
};

struct PolicyTrace {
  std::vector<CycleTrace> cycles;
};

struct PolicyOutputs {
  std::vector<Vec> outputs;         // outputs[j] = pi^{j+1}
  std::vector<HiddenState> hidden;  // hidden[j] after cycle j+1
};

class RecurrentPolicy {
 public:
  RecurrentPolicy() = default;
  explicit RecurrentPolicy(PolicyShape shape)
      : shape_(std::move(shape)), layout_(validated(shape_)), theta_(Vec::Zero(layout_.total)) {
    in_scale_ = shape_.effective_input_scale();
  }

  const PolicyShape& shape() const { return shape_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t param_count() const { return layout_.total; }
  const Vec& params() const { return theta_; }
  Vec& params() { return theta_; }
  void set_params(const Vec& theta) {
    require(theta.size() == theta_.size(), "set_params: parameter count mismatch");
    theta_ = theta;
  }

  // Uniform in +-1/sqrt(fan_in); hidden blocks have fan_in = in + q, the
  // output layer fan_in = q.
  void init_params(std::uint64_t seed) {
    Rng rng = Rng::derive(seed, "policy-init");
    const int q = shape_.hidden;
    const std::size_t gq = static_cast<std::size_t>(shape_.gates() * q);
    for (const auto& ll : layout_.layers) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(ll.in + q));
      const std::size_t count = gq * ll.in + gq * q + gq;
      for (std::size_t i = 0; i < count; ++i) theta_[ll.w + i] = rng.uniform(-bound, bound);
    }
    const double bound = 1.0 / std::sqrt(static_cast<double>(q));
    for (std::size_t i = layout_.wy; i < layout_.total; ++i) theta_[i] = rng.uniform(-bound, bound);
  }

  HiddenState zero_hidden(int batch = 1) const {
    return HiddenState(shape_.layers, Vec::Zero(shape_.hidden * batch));
  }

  // One recurrent cycle on a batch. `input` is the raw (x0; r_c) stack,
  // in x B; `h` holds per-layer q x B hidden states and is updated in place.
  Mat cycle_batch(const Mat& input, std::vector<Mat>& h, CycleTrace* trace = nullptr) const {
    const int q = shape_.hidden;
    const Eigen::Index batch = input.cols();
    if (trace) trace->layers.resize(shape_.layers);
    Mat a = in_scale_.asDiagonal() * input;
    for (int l = 0; l < shape_.layers; ++l) {
      const LayerLayout& ll = layout_.layers[l];
      const Mat& hp = h[l];
      Mat h_new;
      LayerTrace* lt = trace ? &trace->layers[l] : nullptr;
      if (shape_.cell == CellKind::plain) {
        Mat pre = w(ll) * a + u(ll) * hp;
        pre.colwise() += bvec(ll);
        h_new = pre.cwiseMax(0.0);
        if (lt) {
          lt->pre = std::move(pre);
        }
      } else {
        Mat gates = w(ll).topRows(2 * q) * a + u(ll).topRows(2 * q) * hp;
        gates.colwise() += bvec(ll).head(2 * q);
        gates = gates.unaryExpr([](double v) { return sigmoid(v); });
        const auto z = gates.topRows(q);
        const auto g = gates.bottomRows(q);
        Mat gh = g.cwiseProduct(hp);
        Mat pre = w(ll).bottomRows(q) * a + u(ll).bottomRows(q) * gh;
        pre.colwise() += bvec(ll).tail(q);
        h_new = (Mat::Ones(q, batch) - z).cwiseProduct(hp) + z.cwiseProduct(pre.cwiseMax(0.0));
        if (lt) {
          lt->gates = std::move(gates);
          lt->pre = std::move(pre);
        }
      }
      if (lt) {
        lt->in = std::move(a);
        lt->h_prev = hp;
        lt->h = h_new;
      }
      a = h_new;
      h[l] = std::move(h_new);
    }
    Mat opre = wy() * a;
    opre.colwise() += byvec();
    Mat th = opre.array().tanh().matrix();
    Mat y = shape_.output_scale.asDiagonal() * th;
    if (trace) trace->tanh_out = std::move(th);
    return y;
  }

  // Batched forward over `cycles` cycles from h_0 = 0. refs[j] is the p x B
  // reference fed at cycle j + 1. Returns the m x B output of every cycle.
  std::vector<Mat> forward_batch(const Mat& x0, std::span<const Mat> refs, int cycles,
                                 PolicyTrace* trace = nullptr) const {
    require(cycles >= 1 && static_cast<std::size_t>(cycles) <= refs.size(),
            "forward: cycle count exceeds reference length");
    require(x0.rows() == shape_.state_dim, "forward: state dimension mismatch");
    const Eigen::Index batch = x0.cols();
    std::vector<Mat> h(shape_.layers, Mat::Zero(shape_.hidden, batch));
    Mat input(shape_.input_dim(), batch);
    input.topRows(shape_.state_dim) = x0;
    std::vector<Mat> out;
    out.reserve(cycles);
    if (trace) trace->cycles.assign(cycles, {});
    for (int c = 0; c < cycles; ++c) {
      require(refs[c].rows() == shape_.ref_dim && refs[c].cols() == batch,
              "forward: reference dimension mismatch");
      input.bottomRows(shape_.ref_dim) = refs[c];
      out.push_back(cycle_batch(input, h, trace ? &trace->cycles[c] : nullptr));
    }
    return out;
  }

  // Single-instance forward; r has one column per step and c <= r.cols().
  PolicyOutputs forward(const Vec& x0, const RefTraj& r, int cycles) const {
    require(cycles >= 1 && cycles <= r.cols(), "forward: cycle count exceeds reference length");
    require(x0.size() == shape_.state_dim && r.rows() == shape_.ref_dim,
            "forward: input dimension mismatch");
    std::vector<Mat> h(shape_.layers, Mat::Zero(shape_.hidden, 1));
    Mat input(shape_.input_dim(), 1);
    input.topRows(shape_.state_dim) = x0;
    PolicyOutputs res;
    for (int c = 0; c < cycles; ++c) {
      input.bottomRows(shape_.ref_dim) = r.col(c);
      res.outputs.push_back(cycle_batch(input, h).col(0));
      HiddenState hs;
      for (const auto& m : h) hs.push_back(m.col(0));
      res.hidden.push_back(std::move(hs));
    }
    return res;
  }

  // Output of the last cycle only.
  Vec evaluate(const Vec& x0, const RefTraj& r, int cycles) const {
    return forward(x0, r, cycles).outputs.back();
  }

  // Reverse-mode pass through a traced forward. dout[c] is dLoss/dy_{c+1}
  // (m x B) or an empty matrix when that cycle's output is unused. Adds the
  // parameter gradient (summed over the batch) to `grad` and returns
  // dLoss/dx0 (n x B).
  Mat backward_batch(const PolicyTrace& trace, std::span<const Mat> dout, Eigen::Ref<Vec> grad) const {
    const int q = shape_.hidden;
    const int cycles = static_cast<int>(trace.cycles.size());
    require(static_cast<int>(dout.size()) == cycles, "backward: one output gradient per cycle");
    require(grad.size() == static_cast<Eigen::Index>(layout_.total), "backward: gradient size");
    const Eigen::Index batch = trace.cycles.front().tanh_out.cols();

    std::vector<Mat> carry(shape_.layers, Mat::Zero(q, batch));
    Mat dx0 = Mat::Zero(shape_.state_dim, batch);
    auto gWy = grad_block(grad, layout_.wy, shape_.output_dim, q);
    auto gby = grad.segment(static_cast<Eigen::Index>(layout_.by), shape_.output_dim);

    for (int c = cycles - 1; c >= 0; --c) {
      const CycleTrace& ct = trace.cycles[c];
      Mat dh_top = Mat::Zero(q, batch);
      if (dout[c].size() > 0) {
        const Mat dpre = (shape_.output_scale.asDiagonal() * dout[c])
                             .cwiseProduct((1.0 - ct.tanh_out.array().square()).matrix());
        const Mat& htop = ct.layers.back().h;
        gWy.noalias() += dpre * htop.transpose();
        gby += dpre.rowwise().sum();
        dh_top.noalias() = wy().transpose() * dpre;
      }
      Mat dh_from_above = std::move(dh_top);
      for (int l = shape_.layers - 1; l >= 0; --l) {
        const LayerLayout& ll = layout_.layers[l];
        const LayerTrace& lt = ct.layers[l];
        Mat dh = carry[l] + dh_from_above;
        auto gW = grad_block(grad, ll.w, shape_.gates() * q, ll.in);
        auto gU = grad_block(grad, ll.u, shape_.gates() * q, q);
        auto gb = grad.segment(static_cast<Eigen::Index>(ll.b), shape_.gates() * q);
        Mat da;
        if (shape_.cell == CellKind::plain) {
          const Mat dpre = dh.cwiseProduct((lt.pre.array() > 0.0).cast<double>().matrix());
          gW.noalias() += dpre * lt.in.transpose();
          gU.noalias() += dpre * lt.h_prev.transpose();
          gb += dpre.rowwise().sum();
          da.noalias() = w(ll).transpose() * dpre;
          carry[l].noalias() = u(ll).transpose() * dpre;
        } else {
          const auto z = lt.gates.topRows(q);
          const auto g = lt.gates.bottomRows(q);
          const Mat cand = lt.pre.cwiseMax(0.0);
          const Mat dcpre =
              dh.cwiseProduct(z).cwiseProduct((lt.pre.array() > 0.0).cast<double>().matrix());
          const Mat gh = g.cwiseProduct(lt.h_prev);
          Mat dgates(2 * q, batch);
          // update gate
          dgates.topRows(q) = dh.cwiseProduct(cand - lt.h_prev)
                                  .cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
          // reset gate
          const Mat dgh = u(ll).bottomRows(q).transpose() * dcpre;
          dgates.bottomRows(q) = dgh.cwiseProduct(lt.h_prev)
                                     .cwiseProduct(g.cwiseProduct((1.0 - g.array()).matrix()));

          gW.topRows(2 * q).noalias() += dgates * lt.in.transpose();
          gW.bottomRows(q).noalias() += dcpre * lt.in.transpose();
          gU.topRows(2 * q).noalias() += dgates * lt.h_prev.transpose();
          gU.bottomRows(q).noalias() += dcpre * gh.transpose();
          gb.head(2 * q) += dgates.rowwise().sum();
          gb.tail(q) += dcpre.rowwise().sum();

          da.noalias() = w(ll).topRows(2 * q).transpose() * dgates;
          da.noalias() += w(ll).bottomRows(q).transpose() * dcpre;
          Mat dhp = dh.cwiseProduct((1.0 - z.array()).matrix()) + dgh.cwiseProduct(g);
          dhp.noalias() += u(ll).topRows(2 * q).transpose() * dgates;
          carry[l] = std::move(dhp);
        }
        if (l > 0) {
          dh_from_above = std::move(da);
        } else {
          dx0 += in_scale_.head(shape_.state_dim).asDiagonal() * da.topRows(shape_.state_dim);
        }
      }
    }
    return dx0;
  }

  // Forward-mode Jacobians of every cycle output for a single instance.
  // Column layout of each m x (P + n) matrix: [d/dtheta | d/dx0].
  // Tangents are propagated through the same recursion as the forward pass,
  // independently of backward_batch.
  std::vector<Mat> jacobians_forward_mode(const Vec& x0, const RefTraj& r, int cycles) const {
    require(cycles >= 1 && cycles <= r.cols(), "jacobians: cycle count exceeds reference length");
    const int q = shape_.hidden;
    const int n = shape_.state_dim;
    const Eigen::Index np = static_cast<Eigen::Index>(layout_.total);
    const Eigen::Index dirs = np + n;

    std::vector<Vec> h(shape_.layers, Vec::Zero(q));
    std::vector<Mat> dh(shape_.layers, Mat::Zero(q, dirs));
    std::vector<Mat> result;

    Vec raw(shape_.input_dim());
    raw.head(n) = x0;
    Mat da_input = Mat::Zero(shape_.input_dim(), dirs);
    for (int k = 0; k < n; ++k) da_input(k, np + k) = in_scale_[k];

    // Adds the tangent contribution of parameter directions for pre = W a + U v + b
    // where W, U, b are rows [row0, row0 + rows) of the layer's stacked blocks.
    auto add_param_dirs = [&](Mat& dpre, const LayerLayout& ll, int row0, int rows, const Vec& a,
                              const Vec& v) {
      const int gq = shape_.gates() * q;
      for (int i = 0; i < rows; ++i) {
        const int row = row0 + i;
        for (int k = 0; k < ll.in; ++k)
          dpre(i, static_cast<Eigen::Index>(ll.w) + row + static_cast<Eigen::Index>(k) * gq) += a[k];
        for (int k = 0; k < q; ++k)
          dpre(i, static_cast<Eigen::Index>(ll.u) + row + static_cast<Eigen::Index>(k) * gq) += v[k];
        dpre(i, static_cast<Eigen::Index>(ll.b) + row) += 1.0;
      }
    };

    for (int c = 0; c < cycles; ++c) {
      raw.tail(shape_.ref_dim) = r.col(c);
      Vec a = in_scale_.cwiseProduct(raw);
      Mat da = da_input;
      for (int l = 0; l < shape_.layers; ++l) {
        const LayerLayout& ll = layout_.layers[l];
        const Vec hp = h[l];
        const Mat dhp = dh[l];
        if (shape_.cell == CellKind::plain) {
          Vec pre = w(ll) * a + u(ll) * hp + bvec(ll);
          Mat dpre = w(ll) * da + u(ll) * dhp;
          add_param_dirs(dpre, ll, 0, q, a, hp);
          for (int i = 0; i < q; ++i)
            if (!(pre[i] > 0.0)) dpre.row(i).setZero();
          h[l] = pre.cwiseMax(0.0);
          dh[l] = dpre;
        } else {
          Vec zpre = w(ll).topRows(q) * a + u(ll).topRows(q) * hp + bvec(ll).head(q);
          Vec gpre = w(ll).middleRows(q, q) * a + u(ll).middleRows(q, q) * hp + bvec(ll).segment(q, q);
          Vec z = zpre.unaryExpr([](double v) { return sigmoid(v); });
          Vec g = gpre.unaryExpr([](double v) { return sigmoid(v); });
          Mat dz = w(ll).topRows(q) * da + u(ll).topRows(q) * dhp;
          add_param_dirs(dz, ll, 0, q, a, hp);
          Mat dg = w(ll).middleRows(q, q) * da + u(ll).middleRows(q, q) * dhp;
          add_param_dirs(dg, ll, q, q, a, hp);
          for (int i = 0; i < q; ++i) {
            dz.row(i) *= z[i] * (1.0 - z[i]);
            dg.row(i) *= g[i] * (1.0 - g[i]);
          }
          Vec gh = g.cwiseProduct(hp);
          Mat dgh = dg;
          for (int i = 0; i < q; ++i) dgh.row(i) = dg.row(i) * hp[i] + dhp.row(i) * g[i];
          Vec cpre = w(ll).bottomRows(q) * a + u(ll).bottomRows(q) * gh + bvec(ll).tail(q);
          Mat dc = w(ll).bottomRows(q) * da + u(ll).bottomRows(q) * dgh;
          add_param_dirs(dc, ll, 2 * q, q, a, gh);
          Vec cand = cpre.cwiseMax(0.0);
          for (int i = 0; i < q; ++i)
            if (!(cpre[i] > 0.0)) dc.row(i).setZero();
          Mat dnew(q, dirs);
          for (int i = 0; i < q; ++i)
            dnew.row(i) = dz.row(i) * (cand[i] - hp[i]) + dhp.row(i) * (1.0 - z[i]) + dc.row(i) * z[i];
          h[l] = (Vec::Ones(q) - z).cwiseProduct(hp) + z.cwiseProduct(cand);
          dh[l] = std::move(dnew);
        }
        a = h[l];
        da = dh[l];
      }
      Vec opre = wy() * a + byvec();
      Mat dopre = wy() * da;
      for (int i = 0; i < shape_.output_dim; ++i) {
        for (int k = 0; k < q; ++k)
          dopre(i, static_cast<Eigen::Index>(layout_.wy) + i + static_cast<Eigen::Index>(k) * shape_.output_dim) += a[k];
        dopre(i, static_cast<Eigen::Index>(layout_.by) + i) += 1.0;
      }
      for (int i = 0; i < shape_.output_dim; ++i) {
        const double t = std::tanh(opre[i]);
        dopre.row(i) *= shape_.output_scale[i] * (1.0 - t * t);
      }
      result.push_back(std::move(dopre));
    }
    return result;
  }

 private:
  static const PolicyShape& validated(const PolicyShape& s) {
    s.validate();
    return s;
  }

  using CMap = Eigen::Map<const Mat>;
  using MMap = Eigen::Map<Mat>;

  CMap w(const LayerLayout& ll) const {
    return CMap(theta_.data() + ll.w, shape_.gates() * shape_.hidden, ll.in);
  }
  CMap u(const LayerLayout& ll) const {
    return CMap(theta_.data() + ll.u, shape_.gates() * shape_.hidden, shape_.hidden);
  }
  Eigen::Map<const Vec> bvec(const LayerLayout& ll) const {
    return Eigen::Map<const Vec>(theta_.data() + ll.b, shape_.gates() * shape_.hidden);
  }
  CMap wy() const { return CMap(theta_.data() + layout_.wy, shape_.output_dim, shape_.hidden); }
  Eigen::Map<const Vec> byvec() const {
    return Eigen::Map<const Vec>(theta_.data() + layout_.by, shape_.output_dim);
  }
  static MMap grad_block(Eigen::Ref<Vec> grad, std::size_t off, int rows, int cols) {
    return MMap(grad.data() + off, rows, cols);
  }

  PolicyShape shape_;
  ParamLayout layout_{PolicyShape{CellKind::plain, 1, 1, 1, 1, 1, Vec::Ones(1), {}}};
  Vec theta_;
  Vec in_scale_;
};

// Repeats the last column until the trajectory has `length` steps.
inline RefTraj pad_reference(const RefTraj& r, int length) {
  require(r.cols() >= 1, "pad_reference: empty reference");
  if (r.cols() >= length) return r.leftCols(length);
  RefTraj out(r.rows(), length);
  out.leftCols(r.cols()) = r;
  for (Eigen::Index j = r.cols(); j < length; ++j) out.col(j) = r.col(r.cols() - 1);
  return out;
}

}  // namespace rmpc
