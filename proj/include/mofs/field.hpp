#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mofs/errors.hpp"
#include "mofs/tensor.hpp"

namespace mofs {

/// Single-channel H x W scalar grid.
struct Field {
    Tensor values; // (H,W)

    Field() = default;
    explicit Field(Tensor v) : values(std::move(v)) {
        if (values.ndim() != 2) throw ConfigError("Field: expects a 2D tensor");
    }
    Field(int h, int w) : values(Tensor({h, w})) {}

    int height() const { return values.dim(0); }
    int width() const { return values.dim(1); }
    double& at(int i, int j) { return values.at(i, j); }
    double at(int i, int j) const { return values.at(i, j); }
};

enum class FieldRole { input_a, output_u };

/// Gaussian-normalizer statistics for one field role.
struct NormalizerStats {
    double mean = 0.0;
    double std = 1.0;
    FieldRole role = FieldRole::input_a;

    Field apply(const Field& f) const {
        Field out = f;
        for (std::int64_t i = 0; i < out.values.numel(); ++i)
            out.values[i] = (out.values[i] - mean) / std;
        return out;
    }

    Field invert(const Field& f) const {
        Field out = f;
        for (std::int64_t i = 0; i < out.values.numel(); ++i)
            out.values[i] = out.values[i] * std + mean;
        return out;
    }
};

/// One named PDE operator family with its samples and metadata.
struct OperatorDataset {
    int operator_id = 0;
    std::string name;
    std::vector<std::pair<Field, Field>> samples; // (a, u)
    std::map<std::string, double> generator_params;
    NormalizerStats norm_a;
    NormalizerStats norm_u;
    std::string description_text;

    int size() const { return static_cast<int>(samples.size()); }
    int height() const { return samples.empty() ? 0 : samples.front().first.height(); }
    int width() const { return samples.empty() ? 0 : samples.front().first.width(); }
};

} // namespace mofs
