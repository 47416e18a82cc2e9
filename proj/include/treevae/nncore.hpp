#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "nlohmann/json.hpp"
#include "treevae/corpus.hpp"
#include "treevae/errors.hpp"
#include "treevae/rng.hpp"
#include "treevae/treelang.hpp"

namespace treevae::nn {

// Dense float32 storage. All learned state lives in tensors; the autodiff
// tape widens to double for compute and rounds back on update.
struct Tensor {
    std::vector<int> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);
    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, float v);
    static Tensor from_vector(std::vector<float> v);

    std::int64_t numel() const;
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() > 1 ? shape[1] : 1; }
};

struct Param {
    std::string name;
    Tensor value;
    Tensor grad;  // accumulated across backward passes until zero_grad
};

class ParamRegistry {
public:
    Param* add(const std::string& name, Tensor init);
    Param* find(const std::string& name);
    const Param* find(const std::string& name) const;
    const std::vector<std::unique_ptr<Param>>& all() const { return params_; }
    void zero_grad();
    std::int64_t total_parameters() const;

private:
    std::vector<std::unique_ptr<Param>> params_;
    std::map<std::string, Param*> by_name_;
};

// Uniform(-limit, limit) with limit = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_init(int fan_out, int fan_in, rng::Rng& r);
Tensor uniform_init(std::vector<int> shape, float limit, rng::Rng& r);

// Plain double-vector reference ops. The tape composes the same math; these
// exist as an independent contract for tests and the chain-equivalence check.
std::vector<double> linear(const std::vector<double>& w, int m, int n,
                           const std::vector<double>& x, const std::vector<double>* bias);
std::vector<double> softmax(const std::vector<double>& v);
std::vector<double> log_softmax(const std::vector<double>& v);

struct LstmState {
    std::vector<double> h, c;
};

// Packed gate order [i, f, o, u]: w is [4H x D], u is [4H x H], b is [4H].
LstmState lstm_cell(const std::vector<double>& w, const std::vector<double>& u,
                    const std::vector<double>& b, int hidden, int input,
                    const std::vector<double>& x, const LstmState& prev);

std::string base64_encode(const unsigned char* data, std::size_t n);
std::vector<unsigned char> base64_decode(const std::string& text);

// Token tables per category, built over anonymized programs so identifiers
// are the positional ID0..IDk alphabet.
struct Vocab {
    std::array<std::vector<std::string>, 5> tables;
    std::array<std::map<std::string, int>, 5> index;
    std::vector<std::int64_t> literal_counts;

    int size(treelang::TokenCategory c) const { return static_cast<int>(tables[static_cast<int>(c)].size()); }
    const std::vector<std::string>& table(treelang::TokenCategory c) const { return tables[static_cast<int>(c)]; }
    int id_of(treelang::TokenCategory c, const std::string& text) const;  // throws OutOfVocab
    int find_id(treelang::TokenCategory c, const std::string& text) const;  // -1 when absent
    nlohmann::json to_json() const;
    static Vocab from_json(const nlohmann::json& j);
    void rebuild_index();
};

Vocab build_vocab(const std::vector<corpus::CorpusRecord>& records, int identifier_headroom = 8);

class Adam {
public:
    explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(ParamRegistry& reg);
    long steps_taken() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace treevae::nn
