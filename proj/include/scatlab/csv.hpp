// scatlab -- deterministic CSV output: fixed column order, shortest
// round-trip number formatting, serialized writes.
#pragma once

#include "scatlab/core.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace scatlab::csv {

class Writer {
public:
    Writer(const std::string& path, std::vector<std::string> columns)
        : out_(path), ncols_(columns.size()) {
        if (!out_) throw std::runtime_error("csv: cannot open " + path);
        for (size_t i = 0; i < columns.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != ncols_) throw std::logic_error("csv: column count mismatch");
        for (size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format_double(values[i]);
        }
        out_ << '\n';
    }

    void row_mixed(const std::vector<std::string>& values) {
        if (values.size() != ncols_) throw std::logic_error("csv: column count mismatch");
        for (size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << values[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    size_t ncols_;
};

}  // namespace scatlab::csv
