#include "bdml/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace bdml {

namespace {

double parse_double(const std::string& tok, const std::string& path, int line) {
    try {
        size_t pos = 0;
        const double v = std::stod(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError(path, line, "not a number: '" + tok + "'");
    }
}

int parse_label(const std::string& tok, const std::string& path, int line) {
    try {
        size_t pos = 0;
        const int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw ParseError(path, line, "not an integer label: '" + tok + "'");
    }
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

LabeledDataset load_csv(std::ifstream& in, const std::string& path) {
    LabeledDataset data;
    std::string line;
    int lineno = 0;
    int d = -1;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto toks = split(t, ',');
        if (toks.size() < 2) throw ParseError(path, lineno, "need a label and features");
        if (d < 0)
            d = static_cast<int>(toks.size()) - 1;
        else if (static_cast<int>(toks.size()) - 1 != d)
            throw ParseError(path, lineno,
                             "ragged row: expected " + std::to_string(d + 1) + " fields, got " +
                                 std::to_string(toks.size()));
        data.labels.push_back(parse_label(trim(toks[0]), path, lineno));
        VectorXd x(d);
        for (int j = 0; j < d; ++j) x(j) = parse_double(trim(toks[j + 1]), path, lineno);
        data.points.push_back(std::move(x));
    }
    if (data.points.empty()) throw ParseError(path, lineno, "empty dataset");
    data.d = d;
    data.update_gamma();
    return data;
}

LabeledDataset load_svmlight(std::ifstream& in, const std::string& path) {
    struct Row {
        int label;
        std::vector<std::pair<int, double>> entries;  // 1-based indices
    };
    std::vector<Row> rows;
    std::string line;
    int lineno = 0;
    int max_index = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        std::istringstream ss(t);
        std::string tok;
        ss >> tok;
        Row row;
        row.label = parse_label(tok, path, lineno);
        while (ss >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw ParseError(path, lineno, "expected idx:val, got '" + tok + "'");
            const int idx = parse_label(tok.substr(0, colon), path, lineno);
            if (idx < 1) throw ParseError(path, lineno, "feature indices are 1-based");
            const double val = parse_double(tok.substr(colon + 1), path, lineno);
            row.entries.emplace_back(idx, val);
            max_index = std::max(max_index, idx);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path, lineno, "empty dataset");
    LabeledDataset data;
    data.d = max_index;
    for (const auto& row : rows) {
        VectorXd x = VectorXd::Zero(max_index);
        for (const auto& [idx, val] : row.entries) x(idx - 1) = val;
        data.points.push_back(std::move(x));
        data.labels.push_back(row.label);
    }
    data.update_gamma();
    return data;
}

}  // namespace

LabeledDataset load_dataset(const std::string& path, DataFormat format) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    return format == DataFormat::csv ? load_csv(in, path) : load_svmlight(in, path);
}

void save_dataset_csv(const LabeledDataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write: " + path);
    out << std::setprecision(17);
    for (int i = 0; i < data.size(); ++i) {
        out << data.labels[i];
        for (int j = 0; j < data.d; ++j) out << ',' << data.points[i](j);
        out << '\n';
    }
}

}  // namespace bdml
