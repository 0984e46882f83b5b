#include "netid/io.hpp"

#include <cstdio>
#include <sstream>

namespace netid {

std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

CsvWriter::CsvWriter(const std::string& path) : out_(path) {
    if (!out_) throw InvalidInput("cannot open for writing: " + path);
}

void CsvWriter::header(const std::vector<std::string>& names) {
    for (const auto& n : names) cell(n);
    end_row();
}

void CsvWriter::cell(double x) { cell(format_double(x)); }

void CsvWriter::cell(Index x) { cell(std::to_string(x)); }

void CsvWriter::cell(const std::string& s) {
    if (!first_) out_ << ',';
    out_ << s;
    first_ = false;
}

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open CSV file: " + path);
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) throw InvalidInput(path + ": empty CSV");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    table.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != table.header.size()) {
            throw InvalidInput(path + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(table.header.size()) + " fields");
        }
        std::vector<double> row;
        for (const auto& f : fields) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(f, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != f.size() || f.empty()) throw InvalidInput(path + ":" + std::to_string(lineno) + ": bad number '" + f + "'");
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace netid
