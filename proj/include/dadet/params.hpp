#pragma once

// Named parameter arrays. Models are plain data here; the forward functions in
// model.hpp read from a store and gradients accumulate into a parallel
// GradStore. Mutation goes through writer-tagged views so tests can assert who
// wrote what (the teacher must only ever be written by EMA or checkpoint load).

#include <map>
#include <string>
#include <vector>

#include "dadet/common.hpp"
#include "dadet/rng.hpp"
#include "dadet/tensor.hpp"

namespace dadet {

enum class Writer { Init, Optimizer, Ema, Load };

template <typename T>
class ParamStore {
public:
    int add(const std::string& name, Tensor<T> t) {
        if (index_.count(name)) throw StructuralError("duplicate parameter: " + name);
        index_[name] = static_cast<int>(names_.size());
        names_.push_back(name);
        tensors_.push_back(std::move(t));
        return static_cast<int>(names_.size()) - 1;
    }

    int count() const { return static_cast<int>(tensors_.size()); }
    const std::string& name(int i) const { return names_[static_cast<size_t>(i)]; }
    const Tensor<T>& tensor(int i) const { return tensors_[static_cast<size_t>(i)]; }
    const Tensor<T>& tensor(const std::string& n) const { return tensors_[static_cast<size_t>(find(n))]; }

    int find(const std::string& n) const {
        auto it = index_.find(n);
        if (it == index_.end()) throw StructuralError("unknown parameter: " + n);
        return it->second;
    }
    bool has(const std::string& n) const { return index_.count(n) != 0; }

    Tensor<T>& mutable_tensor(int i, Writer w) {
        writes_[w]++;
        return tensors_[static_cast<size_t>(i)];
    }
    Tensor<T>& mutable_tensor(const std::string& n, Writer w) { return mutable_tensor(find(n), w); }

    long writes(Writer w) const {
        auto it = writes_.find(w);
        return it == writes_.end() ? 0 : it->second;
    }

    long total_scalars() const {
        long n = 0;
        for (const auto& t : tensors_) n += t.size();
        return n;
    }

    template <typename U>
    ParamStore<U> cast() const {
        ParamStore<U> out;
        for (int i = 0; i < count(); ++i) out.add(name(i), tensor(i).template cast<U>());
        return out;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> tensors_;
    std::map<std::string, int> index_;
    std::map<Writer, long> writes_;
};

template <typename T>
struct GradStore {
    std::vector<Tensor<T>> grads;

    explicit GradStore(const ParamStore<T>& params) {
        grads.reserve(static_cast<size_t>(params.count()));
        for (int i = 0; i < params.count(); ++i) grads.emplace_back(params.tensor(i).shape);
    }
    void zero() {
        for (auto& g : grads) g.fill(T(0));
    }
    Tensor<T>& operator[](int i) { return grads[static_cast<size_t>(i)]; }
};

// Teacher <- alpha * teacher + (1 - alpha) * student, elementwise.
template <typename T>
void ema_update(ParamStore<T>& teacher, const ParamStore<T>& student, T alpha) {
    if (teacher.count() != student.count())
        throw StructuralError("ema_update: parameter count mismatch");
    for (int i = 0; i < teacher.count(); ++i) {
        if (teacher.name(i) != student.name(i))
            throw StructuralError("ema_update: parameter name mismatch: " + teacher.name(i));
        auto& t = teacher.mutable_tensor(i, Writer::Ema);
        const auto& s = student.tensor(i);
        if (t.shape != s.shape)
            throw StructuralError("ema_update: shape mismatch for " + teacher.name(i));
        for (size_t j = 0; j < t.data.size(); ++j)
            t.data[j] = alpha * t.data[j] + (T(1) - alpha) * s.data[j];
    }
}

template <typename T>
void copy_params(ParamStore<T>& dst, const ParamStore<T>& src, Writer w) {
    if (dst.count() != src.count()) throw StructuralError("copy_params: count mismatch");
    for (int i = 0; i < dst.count(); ++i) dst.mutable_tensor(i, w).data = src.tensor(i).data;
}

// SGD with momentum. Frozen parameters are skipped entirely.
template <typename T>
struct SgdOptimizer {
    T lr = T(0.01);
    T momentum = T(0.9);
    std::vector<Tensor<T>> velocity;
    std::vector<bool> frozen;

    explicit SgdOptimizer(const ParamStore<T>& params) {
        velocity.reserve(static_cast<size_t>(params.count()));
        for (int i = 0; i < params.count(); ++i) velocity.emplace_back(params.tensor(i).shape);
        frozen.assign(static_cast<size_t>(params.count()), false);
    }

    void step(ParamStore<T>& params, GradStore<T>& grads) {
        for (int i = 0; i < params.count(); ++i) {
            if (frozen[static_cast<size_t>(i)]) continue;
            auto& p = params.mutable_tensor(i, Writer::Optimizer);
            auto& v = velocity[static_cast<size_t>(i)];
            auto& g = grads[i];
            for (size_t j = 0; j < p.data.size(); ++j) {
                v.data[j] = momentum * v.data[j] + g.data[j];
                p.data[j] -= lr * v.data[j];
            }
        }
    }
};

// He-style init for conv/linear weights; biases zero.
template <typename T>
void init_weight(Tensor<T>& w, int fan_in, Rng& rng) {
    T scale = std::sqrt(T(2) / T(fan_in));
    for (auto& v : w.data) v = scale * static_cast<T>(rng.normal());
}

// Small-std init for prediction heads (cls/box/objectness). He-sized logits
// start in the +/-10 range, which saturates the losses and makes the first
// optimizer steps violent enough to collapse some seeds; heads start near
// zero so training opens at the uniform-prediction loss.
template <typename T>
void init_head_weight(Tensor<T>& w, Rng& rng) {
    for (auto& v : w.data) v = T(0.01) * static_cast<T>(rng.normal());
}

}  // namespace dadet
