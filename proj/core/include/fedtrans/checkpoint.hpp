#pragma once

#include <iosfwd>
#include <string>
#include <utility>

#include "fedtrans/model.hpp"

namespace fedtrans {

// Versioned structured-text checkpoint: topology (cells with dims,
// activations, origins, matching degrees) followed by the flat weight arrays
// in cell order. Doubles are printed with 17 significant digits, so
// save -> load -> save is byte identical.
void save_checkpoint(std::ostream& out, const Model& model, const WeightSet& weights);
void save_checkpoint(const std::string& path, const Model& model, const WeightSet& weights);

std::pair<Model, WeightSet> load_checkpoint(std::istream& in);
std::pair<Model, WeightSet> load_checkpoint(const std::string& path);

std::string checkpoint_string(const Model& model, const WeightSet& weights);

} // namespace fedtrans
