#include "gcanet/autograd.hpp"

#include <stdexcept>
#include <unordered_set>

namespace gcanet {

Var leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    return n;
}

void backward(const Var& loss) {
    if (loss->value.numel() != 1)
        throw std::invalid_argument("backward: loss must be scalar, got shape " +
                                    loss->value.shape().str());
    if (loss->requires_grad && !loss->backward_fn && !loss->parents.empty())
        throw std::logic_error("backward: tape already consumed; rebuild the forward pass");

    // iterative post-order DFS; graphs can be deep at large image sizes
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({loss.get(), 0});
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (!node->requires_grad) {
            stack.pop_back();
            continue;
        }
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    if (!loss->requires_grad) return;  // constant loss: nothing reachable

    // intermediate grads start at zero; leaf (parameter) grads accumulate
    for (Node* n : order)
        if (!n->parents.empty() || !n->grad_live) n->zero_grad();
    loss->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents)
                if (p->requires_grad) p->ensure_grad();
            n->backward_fn(*n);
            n->backward_fn = nullptr;  // consume the tape
        }
    }
}

// ---- ops ----

Var add(const Var& a, const Var& b) {
    check_same_shape("add", a->value.shape(), b->value.shape());
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] + b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const int64_t n = self.value.numel();
        for (int k = 0; k < 2; ++k) {
            Node& p = *self.parents[k];
            if (!p.requires_grad) continue;
            for (int64_t i = 0; i < n; ++i) p.grad[i] += self.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape("sub", a->value.shape(), b->value.shape());
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] - b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const int64_t n = self.value.numel();
        if (self.parents[0]->requires_grad)
            for (int64_t i = 0; i < n; ++i) self.parents[0]->grad[i] += self.grad[i];
        if (self.parents[1]->requires_grad)
            for (int64_t i = 0; i < n; ++i) self.parents[1]->grad[i] -= self.grad[i];
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape("mul", a->value.shape(), b->value.shape());
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& self) {
        const int64_t n = self.value.numel();
        Node& a = *self.parents[0];
        Node& b = *self.parents[1];
        if (a.requires_grad)
            for (int64_t i = 0; i < n; ++i) a.grad[i] += self.grad[i] * b.value[i];
        if (b.requires_grad)
            for (int64_t i = 0; i < n; ++i) b.grad[i] += self.grad[i] * a.value[i];
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] * s;
    return make_node(std::move(out), {a}, [s](Node& self) {
        const int64_t n = self.value.numel();
        for (int64_t i = 0; i < n; ++i) self.parents[0]->grad[i] += self.grad[i] * s;
    });
}

Var relu(const Var& a) {
    Tensor out(a->value.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = a->value[i] > 0.0 ? a->value[i] : 0.0;
    return make_node(std::move(out), {a}, [](Node& self) {
        const int64_t n = self.value.numel();
        Node& a = *self.parents[0];
        for (int64_t i = 0; i < n; ++i)
            if (a.value[i] > 0.0) a.grad[i] += self.grad[i];
    });
}

Var mean_square(const Var& a) {
    const int64_t n = a->value.numel();
    if (n == 0) throw std::invalid_argument("mean_square: empty tensor");
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a->value[i] * a->value[i];
    Tensor out(Shape{1, 1, 1, 1});
    out[0] = acc / static_cast<double>(n);
    return make_node(std::move(out), {a}, [n](Node& self) {
        Node& a = *self.parents[0];
        const double g = self.grad[0] * 2.0 / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) a.grad[i] += g * a.value[i];
    });
}

Var sum_all(const Var& a) {
    const int64_t n = a->value.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += a->value[i];
    Tensor out(Shape{1, 1, 1, 1});
    out[0] = acc;
    return make_node(std::move(out), {a}, [n](Node& self) {
        Node& a = *self.parents[0];
        const double g = self.grad[0];
        for (int64_t i = 0; i < n; ++i) a.grad[i] += g;
    });
}

Var concat_channels(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
    Shape s0 = parts[0]->value.shape();
    int64_t ctot = 0;
    for (const auto& p : parts) {
        const Shape& s = p->value.shape();
        if (s.n != s0.n || s.h != s0.h || s.w != s0.w)
            throw std::invalid_argument("concat_channels: shape mismatch " + s0.str() + " vs " +
                                        s.str());
        ctot += s.c;
    }
    Tensor out(Shape{s0.n, ctot, s0.h, s0.w});
    const int64_t plane = s0.h * s0.w;
    for (int64_t n = 0; n < s0.n; ++n) {
        int64_t coff = 0;
        for (const auto& p : parts) {
            const int64_t pc = p->value.shape().c;
            const double* src = p->value.data() + n * pc * plane;
            double* dst = out.data() + (n * ctot + coff) * plane;
            for (int64_t i = 0; i < pc * plane; ++i) dst[i] = src[i];
            coff += pc;
        }
    }
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_node(std::move(out), std::move(parents), [plane, ctot](Node& self) {
        const Shape s = self.value.shape();
        for (int64_t n = 0; n < s.n; ++n) {
            int64_t coff = 0;
            for (auto& pv : self.parents) {
                Node& p = *pv;
                const int64_t pc = p.value.shape().c;
                if (p.requires_grad) {
                    const double* src = self.grad.data() + (n * ctot + coff) * plane;
                    double* dst = p.grad.data() + n * pc * plane;
                    for (int64_t i = 0; i < pc * plane; ++i) dst[i] += src[i];
                }
                coff += pc;
            }
        }
    });
}

Var slice_channels(const Var& a, int64_t c0, int64_t c1) {
    const Shape s = a->value.shape();
    if (c0 < 0 || c1 > s.c || c0 >= c1)
        throw std::invalid_argument("slice_channels: range [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") invalid for shape " + s.str());
    Tensor out(Shape{s.n, c1 - c0, s.h, s.w});
    const int64_t plane = s.h * s.w;
    for (int64_t n = 0; n < s.n; ++n) {
        const double* src = a->value.data() + (n * s.c + c0) * plane;
        double* dst = out.data() + n * (c1 - c0) * plane;
        for (int64_t i = 0; i < (c1 - c0) * plane; ++i) dst[i] = src[i];
    }
    return make_node(std::move(out), {a}, [c0, c1, plane](Node& self) {
        Node& a = *self.parents[0];
        const Shape s = a.value.shape();
        for (int64_t n = 0; n < s.n; ++n) {
            const double* src = self.grad.data() + n * (c1 - c0) * plane;
            double* dst = a.grad.data() + (n * s.c + c0) * plane;
            for (int64_t i = 0; i < (c1 - c0) * plane; ++i) dst[i] += src[i];
        }
    });
}

Var mul_gate(const Var& gate, const Var& x) {
    const Shape gs = gate->value.shape();
    const Shape xs = x->value.shape();
    if (gs.c != 1 || gs.n != xs.n || gs.h != xs.h || gs.w != xs.w)
        throw std::invalid_argument("mul_gate: gate " + gs.str() + " incompatible with " +
                                    xs.str());
    Tensor out(xs);
    const int64_t plane = xs.h * xs.w;
    for (int64_t n = 0; n < xs.n; ++n) {
        const double* g = gate->value.data() + n * plane;
        for (int64_t c = 0; c < xs.c; ++c) {
            const double* src = x->value.data() + (n * xs.c + c) * plane;
            double* dst = out.data() + (n * xs.c + c) * plane;
            for (int64_t i = 0; i < plane; ++i) dst[i] = g[i] * src[i];
        }
    }
    return make_node(std::move(out), {gate, x}, [plane](Node& self) {
        Node& g = *self.parents[0];
        Node& x = *self.parents[1];
        const Shape xs = x.value.shape();
        for (int64_t n = 0; n < xs.n; ++n) {
            for (int64_t c = 0; c < xs.c; ++c) {
                const double* gy = self.grad.data() + (n * xs.c + c) * plane;
                const double* gv = g.value.data() + n * plane;
                const double* xv = x.value.data() + (n * xs.c + c) * plane;
                if (g.requires_grad) {
                    double* gg = g.grad.data() + n * plane;
                    for (int64_t i = 0; i < plane; ++i) gg[i] += gy[i] * xv[i];
                }
                if (x.requires_grad) {
                    double* gx = x.grad.data() + (n * xs.c + c) * plane;
                    for (int64_t i = 0; i < plane; ++i) gx[i] += gy[i] * gv[i];
                }
            }
        }
    });
}

}  // namespace gcanet
