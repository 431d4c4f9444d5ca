#include "fedtrans/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "fedtrans/errors.hpp"

namespace fedtrans {

namespace {

constexpr const char* kMagic = "fedtrans-model v1";

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string origin_token(const CellOrigin& o) {
    switch (o.kind) {
        case OriginKind::Initial: return "initial";
        case OriginKind::WidenedFrom: return "widened:" + std::to_string(o.source);
        case OriginKind::InsertedIdentity: return "inserted";
    }
    return "?";
}

CellOrigin parse_origin(const std::string& tok) {
    if (tok == "initial") return CellOrigin::initial();
    if (tok == "inserted") return CellOrigin::inserted();
    if (tok.rfind("widened:", 0) == 0) return CellOrigin::widened_from(std::stoi(tok.substr(8)));
    throw IoError("checkpoint: bad origin token '" + tok + "'");
}

} // namespace

void save_checkpoint(std::ostream& out, const Model& model, const WeightSet& weights) {
    validate_weights(model, weights);
    out << kMagic << "\n";
    out << "model_id " << model.id << "\n";
    if (model.parent_id.has_value()) {
        out << "parent_id " << *model.parent_id << "\n";
    } else {
        out << "parent_id none\n";
    }
    out << "created_round " << model.created_round << "\n";
    out << "cells " << model.cells.size() << "\n";
    for (const Cell& c : model.cells) {
        auto mc = model.per_cell_mc.find(c.id);
        out << "cell " << c.id << " " << c.in_dim << " " << c.out_dim << " " << to_string(c.activation)
            << " " << origin_token(c.origin) << " "
            << (mc == model.per_cell_mc.end() ? std::string("-") : fmt17(mc->second)) << "\n";
    }
    out << "transfers " << model.widen_transfers.size() << "\n";
    for (const WidenTransfer& wt : model.widen_transfers) {
        out << "transfer " << wt.old_cell << " " << wt.new_cell << " " << wt.successor << " "
            << wt.unit_src.size();
        for (int u : wt.unit_src) out << " " << u;
        out << "\n";
        out << "fraction " << wt.fraction.rows() << " " << wt.fraction.cols() << "\n";
        for (int r = 0; r < wt.fraction.rows(); ++r) {
            for (int c = 0; c < wt.fraction.cols(); ++c) {
                out << (c ? " " : "") << fmt17(wt.fraction.at(r, c));
            }
            out << "\n";
        }
    }
    for (const Cell& c : model.cells) {
        const CellWeights& cw = weights.cells.at(c.id);
        out << "weights " << c.id << " " << c.out_dim << " " << c.in_dim << "\n";
        for (int r = 0; r < c.out_dim; ++r) {
            for (int k = 0; k < c.in_dim; ++k) {
                out << (k ? " " : "") << fmt17(cw.weight.at(r, k));
            }
            out << "\n";
        }
        out << "bias " << c.id << " " << c.out_dim << "\n";
        for (int r = 0; r < c.out_dim; ++r) out << (r ? " " : "") << fmt17(cw.bias.at(r));
        out << "\n";
    }
    out << "end\n";
}

void save_checkpoint(const std::string& path, const Model& model, const WeightSet& weights) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write " + path);
    save_checkpoint(f, model, weights);
}

std::pair<Model, WeightSet> load_checkpoint(std::istream& in) {
    std::string line;
    auto next_line = [&](const char* what) -> std::string& {
        if (!std::getline(in, line)) throw IoError(std::string("checkpoint: truncated before ") + what);
        return line;
    };
    if (next_line("magic") != kMagic) throw IoError("checkpoint: unrecognized header '" + line + "'");

    Model model;
    WeightSet weights;
    std::string key, val;
    {
        std::istringstream ss(next_line("model_id"));
        ss >> key >> val;
        if (key != "model_id") throw IoError("checkpoint: expected model_id");
        model.id = std::stoi(val);
    }
    {
        std::istringstream ss(next_line("parent_id"));
        ss >> key >> val;
        if (key != "parent_id") throw IoError("checkpoint: expected parent_id");
        if (val != "none") model.parent_id = std::stoi(val);
    }
    {
        std::istringstream ss(next_line("created_round"));
        ss >> key >> val;
        if (key != "created_round") throw IoError("checkpoint: expected created_round");
        model.created_round = std::stoi(val);
    }
    int cell_count = 0;
    {
        std::istringstream ss(next_line("cells"));
        ss >> key >> cell_count;
        if (key != "cells" || cell_count < 1) throw IoError("checkpoint: bad cell count");
    }
    for (int i = 0; i < cell_count; ++i) {
        std::istringstream ss(next_line("cell"));
        std::string act, origin, mc;
        Cell c;
        ss >> key >> c.id >> c.in_dim >> c.out_dim >> act >> origin >> mc;
        if (!ss || key != "cell") throw IoError("checkpoint: bad cell line");
        if (act == "relu") {
            c.activation = Activation::Relu;
        } else if (act == "none") {
            c.activation = Activation::None;
        } else {
            throw IoError("checkpoint: bad activation '" + act + "'");
        }
        c.origin = parse_origin(origin);
        if (mc != "-") model.per_cell_mc[c.id] = std::stod(mc);
        model.cells.push_back(c);
    }
    int transfer_count = 0;
    {
        std::istringstream ss(next_line("transfers"));
        ss >> key >> transfer_count;
        if (!ss || key != "transfers" || transfer_count < 0) throw IoError("checkpoint: bad transfer count");
    }
    for (int i = 0; i < transfer_count; ++i) {
        WidenTransfer wt;
        std::size_t units = 0;
        {
            std::istringstream ss(next_line("transfer"));
            ss >> key >> wt.old_cell >> wt.new_cell >> wt.successor >> units;
            if (!ss || key != "transfer") throw IoError("checkpoint: bad transfer line");
            wt.unit_src.resize(units);
            for (std::size_t k = 0; k < units; ++k) {
                if (!(ss >> wt.unit_src[k])) throw IoError("checkpoint: short transfer units");
            }
        }
        int rows = 0, cols = 0;
        {
            std::istringstream ss(next_line("fraction"));
            ss >> key >> rows >> cols;
            if (!ss || key != "fraction" || rows < 0 || cols < 0) throw IoError("checkpoint: bad fraction line");
        }
        wt.fraction = Tensor::matrix(rows, cols);
        for (int r = 0; r < rows; ++r) {
            std::istringstream ss(next_line("fraction row"));
            for (int c = 0; c < cols; ++c) {
                if (!(ss >> wt.fraction.at(r, c))) throw IoError("checkpoint: short fraction row");
            }
        }
        model.widen_transfers.push_back(std::move(wt));
    }
    weights.model_id = model.id;
    for (int i = 0; i < cell_count; ++i) {
        CellId id = 0;
        int out = 0, in_dim = 0;
        {
            std::istringstream ss(next_line("weights"));
            ss >> key >> id >> out >> in_dim;
            if (!ss || key != "weights") throw IoError("checkpoint: bad weights line");
        }
        CellWeights cw;
        cw.weight = Tensor::matrix(out, in_dim);
        for (int r = 0; r < out; ++r) {
            std::istringstream ss(next_line("weight row"));
            for (int k = 0; k < in_dim; ++k) {
                if (!(ss >> cw.weight.at(r, k))) throw IoError("checkpoint: short weight row");
            }
        }
        {
            std::istringstream ss(next_line("bias"));
            CellId bias_id = 0;
            int blen = 0;
            ss >> key >> bias_id >> blen;
            if (!ss || key != "bias" || bias_id != id || blen != out) {
                throw IoError("checkpoint: bad bias line");
            }
        }
        cw.bias = Tensor::vec(out);
        {
            std::istringstream ss(next_line("bias row"));
            for (int r = 0; r < out; ++r) {
                if (!(ss >> cw.bias.at(r))) throw IoError("checkpoint: short bias row");
            }
        }
        weights.cells.emplace(id, std::move(cw));
    }
    if (next_line("end") != "end") throw IoError("checkpoint: missing end marker");
    validate_model(model);
    validate_weights(model, weights);
    if (!weights.all_finite()) throw IoError("checkpoint: non-finite values");
    return {std::move(model), std::move(weights)};
}

std::pair<Model, WeightSet> load_checkpoint(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path);
    return load_checkpoint(f);
}

std::string checkpoint_string(const Model& model, const WeightSet& weights) {
    std::ostringstream ss;
    save_checkpoint(ss, model, weights);
    return ss.str();
}

} // namespace fedtrans
