#include "treevae/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace treevae::nn {

namespace {

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

void Graph::reset() {
    nodes_.clear();
    buf_.clear();
    gbuf_.clear();
    varp_.clear();
    amax_.clear();
    param_memo_.clear();
    used_ = 0;
    swept_ = false;
}

int Graph::alloc(int n) {
    int off = used_;
    used_ += n;
    if (static_cast<int>(buf_.size()) < used_) buf_.resize(used_);
    return off;
}

Graph::Ref Graph::push(Node nd) {
    nodes_.push_back(nd);
    return static_cast<Ref>(nodes_.size() - 1);
}

Graph::Ref Graph::constant(const double* v, int n) {
    if (n <= 0) throw EmptyInput("constant of non-positive length");
    Node nd;
    nd.op = Op::Const;
    nd.len = n;
    nd.off = alloc(n);
    std::copy(v, v + n, buf_.data() + nd.off);
    return push(nd);
}

Graph::Ref Graph::zeros(int n) {
    if (n <= 0) throw EmptyInput("zeros of non-positive length");
    Node nd;
    nd.op = Op::Const;
    nd.len = n;
    nd.off = alloc(n);
    std::fill(buf_.data() + nd.off, buf_.data() + nd.off + n, 0.0);
    return push(nd);
}

Graph::Ref Graph::param(Param* p) {
    auto it = param_memo_.find(p);
    if (it != param_memo_.end()) return it->second;
    int n = static_cast<int>(p->value.data.size());
    if (n == 0) throw EmptyInput("parameter with no elements: " + p->name);
    Node nd;
    nd.op = Op::ParamVec;
    nd.p = p;
    nd.len = n;
    nd.off = alloc(n);
    nd.mrows = p->value.rows();
    nd.mcols = p->value.cols();
    double* dst = buf_.data() + nd.off;
    for (int i = 0; i < n; ++i) dst[i] = static_cast<double>(p->value.data[i]);
    Ref r = push(nd);
    param_memo_[p] = r;
    return r;
}

Graph::Ref Graph::affine_rows(Ref w, Ref x, int row0, int rows, Ref b) {
    const Node& wn = nodes_[w];
    const Node& xn = nodes_[x];
    if (wn.mcols != xn.len || wn.mrows * wn.mcols != wn.len)
        throw ShapeMismatch("affine: operand shapes disagree");
    if (row0 < 0 || rows <= 0 || row0 + rows > wn.mrows)
        throw ShapeMismatch("affine: row range out of bounds");
    if (b != kNone && nodes_[b].len < row0 + rows)
        throw ShapeMismatch("affine: bias too short");
    Node nd;
    nd.op = Op::Affine;
    nd.a = w;
    nd.b = x;
    nd.c = b;
    nd.i0 = row0;
    nd.len = rows;
    nd.off = alloc(rows);
    int n = xn.len;
    const double* wp = buf_.data() + nodes_[w].off + static_cast<std::size_t>(row0) * n;
    const double* xp = buf_.data() + nodes_[x].off;
    const double* bp = b == kNone ? nullptr : buf_.data() + nodes_[b].off + row0;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < rows; ++i) {
        double acc = bp ? bp[i] : 0.0;
        const double* row = wp + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * xp[j];
        y[i] = acc;
    }
    return push(nd);
}

Graph::Ref Graph::affine(Ref w, Ref x, Ref b) {
    return affine_rows(w, x, 0, nodes_[w].mrows, b);
}

Graph::Ref Graph::slice(Ref v, int offset, int len) {
    const Node& vn = nodes_[v];
    if (offset < 0 || len <= 0 || offset + len > vn.len)
        throw ShapeMismatch("slice out of bounds");
    Node nd;
    nd.op = Op::Slice;
    nd.a = v;
    nd.i0 = offset;
    nd.len = len;
    nd.off = alloc(len);
    const double* src = buf_.data() + nodes_[v].off + offset;
    std::copy(src, src + len, buf_.data() + nd.off);
    return push(nd);
}

Graph::Ref Graph::embedding_row(Ref table, int row) {
    const Node& tn = nodes_[table];
    if (tn.mcols <= 0 || tn.mrows <= 0) throw ShapeMismatch("embedding table is not a matrix");
    if (row < 0 || row >= tn.mrows) throw IndexOutOfRange("embedding row out of range");
    return slice(table, row * tn.mcols, tn.mcols);
}

Graph::Ref Graph::add(Ref a, Ref b) { return add_n({a, b}); }

Graph::Ref Graph::add_n(const std::vector<Ref>& xs) {
    if (xs.empty()) throw EmptyInput("add_n of nothing");
    int n = nodes_[xs[0]].len;
    for (Ref r : xs)
        if (nodes_[r].len != n) throw ShapeMismatch("add_n length mismatch");
    Node nd;
    nd.op = Op::AddN;
    nd.i0 = static_cast<int>(varp_.size());
    nd.i1 = static_cast<int>(xs.size());
    for (Ref r : xs) varp_.push_back(r);
    nd.len = n;
    nd.off = alloc(n);
    double* y = buf_.data() + nd.off;
    std::fill(y, y + n, 0.0);
    for (Ref r : xs) {
        const double* src = buf_.data() + nodes_[r].off;
        for (int i = 0; i < n; ++i) y[i] += src[i];
    }
    return push(nd);
}

Graph::Ref Graph::mul(Ref a, Ref b) {
    if (nodes_[a].len != nodes_[b].len) throw ShapeMismatch("mul length mismatch");
    Node nd;
    nd.op = Op::Mul;
    nd.a = a;
    nd.b = b;
    nd.len = nodes_[a].len;
    nd.off = alloc(nd.len);
    const double* pa = buf_.data() + nodes_[a].off;
    const double* pb = buf_.data() + nodes_[b].off;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < nd.len; ++i) y[i] = pa[i] * pb[i];
    return push(nd);
}

Graph::Ref Graph::scale(Ref a, double s) {
    Node nd;
    nd.op = Op::Scale;
    nd.a = a;
    nd.d0 = s;
    nd.len = nodes_[a].len;
    nd.off = alloc(nd.len);
    const double* pa = buf_.data() + nodes_[a].off;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < nd.len; ++i) y[i] = s * pa[i];
    return push(nd);
}

Graph::Ref Graph::sigmoid(Ref a) {
    Node nd;
    nd.op = Op::Sigmoid;
    nd.a = a;
    nd.len = nodes_[a].len;
    nd.off = alloc(nd.len);
    const double* pa = buf_.data() + nodes_[a].off;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < nd.len; ++i) y[i] = stable_sigmoid(pa[i]);
    return push(nd);
}

Graph::Ref Graph::tanh_op(Ref a) {
    Node nd;
    nd.op = Op::Tanh;
    nd.a = a;
    nd.len = nodes_[a].len;
    nd.off = alloc(nd.len);
    const double* pa = buf_.data() + nodes_[a].off;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < nd.len; ++i) y[i] = std::tanh(pa[i]);
    return push(nd);
}

Graph::Ref Graph::exp_op(Ref a) {
    Node nd;
    nd.op = Op::Exp;
    nd.a = a;
    nd.len = nodes_[a].len;
    nd.off = alloc(nd.len);
    const double* pa = buf_.data() + nodes_[a].off;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < nd.len; ++i) y[i] = std::exp(pa[i]);
    return push(nd);
}

Graph::Ref Graph::relu(Ref a) {
    Node nd;
    nd.op = Op::Relu;
    nd.a = a;
    nd.len = nodes_[a].len;
    nd.off = alloc(nd.len);
    const double* pa = buf_.data() + nodes_[a].off;
    double* y = buf_.data() + nd.off;
    for (int i = 0; i < nd.len; ++i) y[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    return push(nd);
}

Graph::Ref Graph::max_rows(const std::vector<Ref>& rows) {
    if (rows.empty()) throw EmptyInput("max_rows of nothing");
    int n = nodes_[rows[0]].len;
    for (Ref r : rows)
        if (nodes_[r].len != n) throw ShapeMismatch("max_rows length mismatch");
    Node nd;
    nd.op = Op::MaxRows;
    nd.i0 = static_cast<int>(varp_.size());
    nd.i1 = static_cast<int>(rows.size());
    for (Ref r : rows) varp_.push_back(r);
    nd.mrows = static_cast<int>(amax_.size());  // argmax arena offset
    amax_.resize(amax_.size() + n, 0);
    nd.len = n;
    nd.off = alloc(n);
    double* y = buf_.data() + nd.off;
    int* am = amax_.data() + nd.mrows;
    const double* first = buf_.data() + nodes_[rows[0]].off;
    std::copy(first, first + n, y);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const double* src = buf_.data() + nodes_[rows[k]].off;
        for (int i = 0; i < n; ++i) {
            if (src[i] > y[i]) {
                y[i] = src[i];
                am[i] = static_cast<int>(k);
            }
        }
    }
    return push(nd);
}

Graph::Ref Graph::cosine(Ref a, Ref b) {
    if (nodes_[a].len != nodes_[b].len) throw ShapeMismatch("cosine length mismatch");
    Node nd;
    nd.op = Op::Cosine;
    nd.a = a;
    nd.b = b;
    nd.len = 1;
    nd.off = alloc(1);
    int n = nodes_[a].len;
    const double* pa = buf_.data() + nodes_[a].off;
    const double* pb = buf_.data() + nodes_[b].off;
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < n; ++i) {
        dot += pa[i] * pb[i];
        na += pa[i] * pa[i];
        nb += pb[i] * pb[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    buf_[nd.off] = (na < 1e-12 || nb < 1e-12) ? 0.0 : dot / (na * nb);
    nd.d0 = na * nb;  // zero marks the degenerate branch for backward
    if (na < 1e-12 || nb < 1e-12) nd.d0 = 0.0;
    return push(nd);
}

Graph::Ref Graph::nll_log_softmax(Ref logits, int target) {
    const Node& ln = nodes_[logits];
    if (target < 0 || target >= ln.len) throw IndexOutOfRange("nll target out of range");
    Node nd;
    nd.op = Op::NllLogSoftmax;
    nd.a = logits;
    nd.i0 = target;
    nd.len = 1;
    nd.off = alloc(1);
    const double* l = buf_.data() + nodes_[logits].off;
    int n = nodes_[logits].len;
    double m = l[0];
    for (int i = 1; i < n; ++i) m = std::max(m, l[i]);
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += std::exp(l[i] - m);
    buf_[nd.off] = m + std::log(sum) - l[target];
    return push(nd);
}

Graph::Ref Graph::bce_logit(Ref logit, double target) {
    if (nodes_[logit].len != 1) throw ShapeMismatch("bce_logit expects a scalar logit");
    Node nd;
    nd.op = Op::BceLogit;
    nd.a = logit;
    nd.d0 = target;
    nd.len = 1;
    nd.off = alloc(1);
    double p = stable_sigmoid(buf_[nodes_[logit].off]);
    p = std::min(1.0 - 1e-7, std::max(1e-7, p));
    buf_[nd.off] = -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
    return push(nd);
}

Graph::Ref Graph::kl_gauss(Ref mu, Ref logvar) {
    if (nodes_[mu].len != nodes_[logvar].len) throw ShapeMismatch("kl_gauss length mismatch");
    Node nd;
    nd.op = Op::KlGauss;
    nd.a = mu;
    nd.b = logvar;
    nd.len = 1;
    nd.off = alloc(1);
    int n = nodes_[mu].len;
    const double* m = buf_.data() + nodes_[mu].off;
    const double* lv = buf_.data() + nodes_[logvar].off;
    double acc = 0;
    for (int i = 0; i < n; ++i) acc += std::exp(lv[i]) + m[i] * m[i] - lv[i] - 1.0;
    buf_[nd.off] = 0.5 * acc;
    return push(nd);
}

double Graph::scalar(Ref r) const {
    if (nodes_[r].len != 1) throw ShapeMismatch("scalar() on a non-scalar node");
    return buf_[nodes_[r].off];
}

std::vector<double> Graph::value(Ref r) const {
    const Node& nd = nodes_[r];
    return std::vector<double>(buf_.begin() + nd.off, buf_.begin() + nd.off + nd.len);
}

void Graph::backward(Ref loss) {
    if (swept_) throw Error("backward already ran on this tape");
    if (nodes_[loss].len != 1) throw ShapeMismatch("backward needs a scalar loss");
    swept_ = true;
    gbuf_.assign(buf_.size(), 0.0);
    gbuf_[nodes_[loss].off] = 1.0;
    for (int idx = loss; idx >= 0; --idx) {
        const Node& nd = nodes_[idx];
        const double* g = gbuf_.data() + nd.off;
        switch (nd.op) {
            case Op::Const:
                break;
            case Op::ParamVec: {
                float* dst = nd.p->grad.data.data();
                for (int i = 0; i < nd.len; ++i) dst[i] += static_cast<float>(g[i]);
                break;
            }
            case Op::Slice: {
                double* ga = gbuf_.data() + nodes_[nd.a].off + nd.i0;
                for (int i = 0; i < nd.len; ++i) ga[i] += g[i];
                break;
            }
            case Op::Affine: {
                const Node& wn = nodes_[nd.a];
                const Node& xn = nodes_[nd.b];
                int n = xn.len;
                const double* xp = buf_.data() + xn.off;
                const double* wp = buf_.data() + wn.off + static_cast<std::size_t>(nd.i0) * n;
                double* gw = gbuf_.data() + wn.off + static_cast<std::size_t>(nd.i0) * n;
                double* gx = gbuf_.data() + xn.off;
                for (int i = 0; i < nd.len; ++i) {
                    double gi = g[i];
                    if (gi == 0.0) continue;
                    const double* row = wp + static_cast<std::size_t>(i) * n;
                    double* grow = gw + static_cast<std::size_t>(i) * n;
                    for (int j = 0; j < n; ++j) {
                        grow[j] += gi * xp[j];
                        gx[j] += gi * row[j];
                    }
                }
                if (nd.c != kNone) {
                    double* gb = gbuf_.data() + nodes_[nd.c].off + nd.i0;
                    for (int i = 0; i < nd.len; ++i) gb[i] += g[i];
                }
                break;
            }
            case Op::AddN: {
                for (int k = 0; k < nd.i1; ++k) {
                    double* ga = gbuf_.data() + nodes_[varp_[nd.i0 + k]].off;
                    for (int i = 0; i < nd.len; ++i) ga[i] += g[i];
                }
                break;
            }
            case Op::Mul: {
                const double* pa = buf_.data() + nodes_[nd.a].off;
                const double* pb = buf_.data() + nodes_[nd.b].off;
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                double* gb = gbuf_.data() + nodes_[nd.b].off;
                for (int i = 0; i < nd.len; ++i) {
                    ga[i] += g[i] * pb[i];
                    gb[i] += g[i] * pa[i];
                }
                break;
            }
            case Op::Scale: {
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.len; ++i) ga[i] += g[i] * nd.d0;
                break;
            }
            case Op::Sigmoid: {
                const double* y = buf_.data() + nd.off;
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.len; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
                break;
            }
            case Op::Tanh: {
                const double* y = buf_.data() + nd.off;
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.len; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
                break;
            }
            case Op::Exp: {
                const double* y = buf_.data() + nd.off;
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.len; ++i) ga[i] += g[i] * y[i];
                break;
            }
            case Op::Relu: {
                const double* x = buf_.data() + nodes_[nd.a].off;
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                for (int i = 0; i < nd.len; ++i)
                    if (x[i] > 0.0) ga[i] += g[i];
                break;
            }
            case Op::MaxRows: {
                const int* am = amax_.data() + nd.mrows;
                for (int i = 0; i < nd.len; ++i) {
                    Ref src = varp_[nd.i0 + am[i]];
                    gbuf_[nodes_[src].off + i] += g[i];
                }
                break;
            }
            case Op::Cosine: {
                if (nd.d0 == 0.0) break;
                int n = nodes_[nd.a].len;
                const double* pa = buf_.data() + nodes_[nd.a].off;
                const double* pb = buf_.data() + nodes_[nd.b].off;
                double* ga = gbuf_.data() + nodes_[nd.a].off;
                double* gb = gbuf_.data() + nodes_[nd.b].off;
                double na2 = 0, nb2 = 0;
                for (int i = 0; i < n; ++i) {
                    na2 += pa[i] * pa[i];
                    nb2 += pb[i] * pb[i];
                }
                double cosv = buf_[nd.off];
                double inv = 1.0 / nd.d0;
                double gs = g[0];
                for (int i = 0; i < n; ++i) {
                    ga[i] += gs * (pb[i] * inv - cosv * pa[i] / na2);
                    gb[i] += gs * (pa[i] * inv - cosv * pb[i] / nb2);
                }
                break;
            }
            case Op::NllLogSoftmax: {
                const Node& ln = nodes_[nd.a];
                int n = ln.len;
                const double* l = buf_.data() + ln.off;
                double* gl = gbuf_.data() + ln.off;
                double m = l[0];
                for (int i = 1; i < n; ++i) m = std::max(m, l[i]);
                double sum = 0;
                for (int i = 0; i < n; ++i) sum += std::exp(l[i] - m);
                double gs = g[0];
                for (int i = 0; i < n; ++i) {
                    double sm = std::exp(l[i] - m) / sum;
                    gl[i] += gs * (sm - (i == nd.i0 ? 1.0 : 0.0));
                }
                break;
            }
            case Op::BceLogit: {
                double l = buf_[nodes_[nd.a].off];
                gbuf_[nodes_[nd.a].off] += g[0] * (stable_sigmoid(l) - nd.d0);
                break;
            }
            case Op::KlGauss: {
                int n = nodes_[nd.a].len;
                const double* m = buf_.data() + nodes_[nd.a].off;
                const double* lv = buf_.data() + nodes_[nd.b].off;
                double* gm = gbuf_.data() + nodes_[nd.a].off;
                double* glv = gbuf_.data() + nodes_[nd.b].off;
                double gs = g[0];
                for (int i = 0; i < n; ++i) {
                    gm[i] += gs * m[i];
                    glv[i] += gs * 0.5 * (std::exp(lv[i]) - 1.0);
                }
                break;
            }
        }
    }
}

Graph::State Graph::lstm_step(Ref w, Ref u, Ref b, int hidden, Ref x, const State& prev) {
    Ref pre = affine(w, x, b);
    if (prev.h != kNone) pre = add(pre, affine(u, prev.h));
    Ref i = sigmoid(slice(pre, 0, hidden));
    Ref f = sigmoid(slice(pre, hidden, hidden));
    Ref o = sigmoid(slice(pre, 2 * hidden, hidden));
    Ref g = tanh_op(slice(pre, 3 * hidden, hidden));
    State next;
    Ref ig = mul(i, g);
    next.c = prev.c != kNone ? add(ig, mul(f, prev.c)) : ig;
    next.h = mul(o, tanh_op(next.c));
    return next;
}

GradCheckReport grad_check(ParamRegistry& reg,
                           const std::function<Graph::Ref(Graph&)>& build,
                           double eps, int per_tensor_cap, std::uint64_t seed) {
    Graph g;
    Graph::Ref loss = build(g);
    if (!std::isfinite(g.scalar(loss))) throw NonFinite("loss is not finite");
    reg.zero_grad();
    g.backward(loss);

    std::vector<std::vector<double>> analytic;
    for (const auto& p : reg.all()) {
        std::vector<double> a(p->grad.data.begin(), p->grad.data.end());
        for (double v : a)
            if (!std::isfinite(v)) throw NonFinite("gradient of " + p->name + " is not finite");
        analytic.push_back(std::move(a));
    }

    auto eval = [&]() {
        Graph h;
        double v = h.scalar(build(h));
        if (!std::isfinite(v)) throw NonFinite("perturbed loss is not finite");
        return v;
    };

    GradCheckReport rep;
    const auto& ps = reg.all();
    for (std::size_t pi = 0; pi < ps.size(); ++pi) {
        auto& p = *ps[pi];
        int n = static_cast<int>(p.value.data.size());
        std::vector<int> picks;
        if (n <= per_tensor_cap) {
            picks.resize(n);
            for (int i = 0; i < n; ++i) picks[i] = i;
        } else {
            rng::Rng r = rng::substream(seed, "gradcheck", pi);
            std::set<int> s;
            while (static_cast<int>(s.size()) < per_tensor_cap)
                s.insert(static_cast<int>(r.uniform_int(0, n - 1)));
            picks.assign(s.begin(), s.end());
        }
        for (int i : picks) {
            float orig = p.value.data[i];
            float up = static_cast<float>(static_cast<double>(orig) + eps);
            float dn = static_cast<float>(static_cast<double>(orig) - eps);
            p.value.data[i] = up;
            double lp = eval();
            p.value.data[i] = dn;
            double lm = eval();
            p.value.data[i] = orig;
            double h = static_cast<double>(up) - static_cast<double>(dn);
            double numeric = (lp - lm) / h;
            double a = analytic[pi][i];
            double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1e-3});
            ++rep.elements_checked;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = p.name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

AdaptiveSoftmax::AdaptiveSoftmax(ParamRegistry& reg, const std::string& prefix, int input_dim,
                                 const std::vector<std::int64_t>& frequencies, int head_size,
                                 rng::Rng& r) {
    int vocab = static_cast<int>(frequencies.size());
    if (vocab == 0) throw EmptyCategoryTable("adaptive softmax over empty vocabulary");
    // Stable rank by descending frequency, class id breaking ties.
    std::vector<int> order(vocab);
    for (int i = 0; i < vocab; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (frequencies[a] != frequencies[b]) return frequencies[a] > frequencies[b];
        return a < b;
    });
    class_to_slot_.resize(vocab);
    slot_to_class_ = order;
    for (int slot = 0; slot < vocab; ++slot) class_to_slot_[order[slot]] = slot;

    head_ = std::min(head_size, vocab);
    bool split = vocab > head_;
    int head_logits = split ? head_ + 1 : head_;
    head_w_ = reg.add(prefix + ".head.w", xavier_init(head_logits, input_dim, r));
    head_b_ = reg.add(prefix + ".head.b", Tensor({head_logits}));
    if (split) {
        int tail = vocab - head_;
        tail_w_ = reg.add(prefix + ".tail.w", xavier_init(tail, input_dim, r));
        tail_b_ = reg.add(prefix + ".tail.b", Tensor({tail}));
    }
}

Graph::Ref AdaptiveSoftmax::nll(Graph& g, Graph::Ref h, int target) const {
    if (target < 0 || target >= vocab_size()) throw IndexOutOfRange("adaptive softmax target out of range");
    int slot = class_to_slot_[target];
    Graph::Ref head_logits = g.affine(g.param(head_w_), h, g.param(head_b_));
    if (!tail_w_ || slot < head_)
        return g.nll_log_softmax(head_logits, slot);
    Graph::Ref from_head = g.nll_log_softmax(head_logits, head_);  // tail bucket
    Graph::Ref tail_logits = g.affine(g.param(tail_w_), h, g.param(tail_b_));
    Graph::Ref from_tail = g.nll_log_softmax(tail_logits, slot - head_);
    return g.add(from_head, from_tail);
}

std::vector<double> AdaptiveSoftmax::log_probs(Graph& g, Graph::Ref h) const {
    Graph::Ref head_logits = g.affine(g.param(head_w_), h, g.param(head_b_));
    auto head_lp = nn::log_softmax(g.value(head_logits));
    int vocab = vocab_size();
    std::vector<double> out(vocab, 0.0);
    for (int slot = 0; slot < head_; ++slot) out[slot_to_class_[slot]] = head_lp[slot];
    if (tail_w_) {
        Graph::Ref tail_logits = g.affine(g.param(tail_w_), h, g.param(tail_b_));
        auto tail_lp = nn::log_softmax(g.value(tail_logits));
        double bucket = head_lp[head_];
        for (int k = 0; k < vocab - head_; ++k)
            out[slot_to_class_[head_ + k]] = bucket + tail_lp[k];
    }
    return out;
}

}  // namespace treevae::nn
