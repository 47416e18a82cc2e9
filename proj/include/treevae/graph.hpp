#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "treevae/nncore.hpp"

namespace treevae::nn {

// Eager reverse-mode tape. Values are computed in double at op creation;
// backward() sweeps the tape once and flushes parameter gradients into the
// float grad buffers. Reset between examples; arenas keep their capacity.
class Graph {
public:
    using Ref = int;
    static constexpr Ref kNone = -1;

    void reset();

    Ref constant(const double* v, int n);
    Ref constant(const std::vector<double>& v) { return constant(v.data(), static_cast<int>(v.size())); }
    Ref constant_scalar(double v) { return constant(&v, 1); }
    Ref zeros(int n);
    Ref param(Param* p);  // memoized per tape

    // y[k] = sum_j W[row0+k, j] * x[j] + b[row0+k]
    Ref affine_rows(Ref w, Ref x, int row0, int rows, Ref b = kNone);
    Ref affine(Ref w, Ref x, Ref b = kNone);
    Ref slice(Ref v, int offset, int len);
    Ref embedding_row(Ref table, int row);
    Ref add(Ref a, Ref b);
    Ref add_n(const std::vector<Ref>& xs);
    Ref sub(Ref a, Ref b) { return add(a, scale(b, -1.0)); }
    Ref mul(Ref a, Ref b);
    Ref scale(Ref a, double s);
    Ref sigmoid(Ref a);
    Ref tanh_op(Ref a);
    Ref exp_op(Ref a);
    Ref relu(Ref a);
    Ref max_rows(const std::vector<Ref>& rows);  // elementwise max, first row wins ties
    Ref cosine(Ref a, Ref b);                    // scalar; 0 when either norm vanishes
    Ref nll_log_softmax(Ref logits, int target);
    Ref bce_logit(Ref logit, double target);
    Ref kl_gauss(Ref mu, Ref logvar);

    int len(Ref r) const { return nodes_[r].len; }
    double scalar(Ref r) const;
    std::vector<double> value(Ref r) const;
    const double* value_ptr(Ref r) const { return buf_.data() + nodes_[r].off; }

    void backward(Ref loss);
    std::size_t size() const { return nodes_.size(); }

    // Composed LSTM step over packed [i,f,o,u] parameters.
    struct State {
        Ref h = kNone, c = kNone;
    };
    State lstm_step(Ref w, Ref u, Ref b, int hidden, Ref x, const State& prev);

private:
    enum class Op : unsigned char {
        Const, ParamVec, Slice, Affine, AddN, Mul, Scale, Sigmoid, Tanh, Exp,
        Relu, MaxRows, Cosine, NllLogSoftmax, BceLogit, KlGauss
    };
    struct Node {
        Op op;
        Ref a = kNone, b = kNone, c = kNone;
        int off = 0, len = 0;
        int i0 = 0, i1 = 0;  // slice offset / affine row0 / nll target / variadic start,count
        double d0 = 0.0;
        Param* p = nullptr;
        int mrows = 0, mcols = 0;
    };

    int alloc(int n);
    Ref push(Node nd);
    double* out(Ref r) { return buf_.data() + nodes_[r].off; }
    const double* in(Ref r) const { return buf_.data() + nodes_[r].off; }
    double* gout(Ref r) { return gbuf_.data() + nodes_[r].off; }

    std::vector<Node> nodes_;
    std::vector<double> buf_, gbuf_;
    std::vector<int> varp_;
    std::vector<int> amax_;
    std::unordered_map<Param*, Ref> param_memo_;
    int used_ = 0;
    bool swept_ = false;
};

struct GradCheckReport {
    int elements_checked = 0;
    double max_rel_err = 0.0;
    std::string worst_param;
    int worst_index = -1;
};

// Central-difference check against the tape. The builder must be
// deterministic (fixed noise, eval-mode masks). Throws NonFinite when any
// loss value or gradient fails to be finite.
GradCheckReport grad_check(ParamRegistry& reg,
                           const std::function<Graph::Ref(Graph&)>& build,
                           double eps = 1e-4, int per_tensor_cap = 64,
                           std::uint64_t seed = 0);

// Frequency-ordered two-level softmax: a head over the most frequent classes
// plus one tail bucket; degenerates to a plain softmax when the vocabulary
// fits in the head.
class AdaptiveSoftmax {
public:
    AdaptiveSoftmax() = default;
    AdaptiveSoftmax(ParamRegistry& reg, const std::string& prefix, int input_dim,
                    const std::vector<std::int64_t>& frequencies, int head_size, rng::Rng& r);

    Graph::Ref nll(Graph& g, Graph::Ref h, int target) const;
    std::vector<double> log_probs(Graph& g, Graph::Ref h) const;  // full vocabulary
    int vocab_size() const { return static_cast<int>(class_to_slot_.size()); }
    int head_size() const { return head_; }
    bool degenerate() const { return tail_w_ == nullptr; }

private:
    int head_ = 0;
    std::vector<int> class_to_slot_;  // class id -> frequency rank
    std::vector<int> slot_to_class_;
    Param* head_w_ = nullptr;
    Param* head_b_ = nullptr;
    Param* tail_w_ = nullptr;
    Param* tail_b_ = nullptr;
};

}  // namespace treevae::nn
