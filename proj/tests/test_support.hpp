#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qptest {

/// One block of a fixture file: "fixture NAME", then "key v1 v2 ...", then "end".
using FixtureBlock = std::map<std::string, std::vector<double>>;

inline std::map<std::string, FixtureBlock> read_fixture_blocks(const std::string& file) {
    std::ifstream in(std::string(QP_FIXTURE_DIR) + "/" + file);
    if (!in) throw std::runtime_error("missing fixture " + file);
    std::map<std::string, FixtureBlock> out;
    std::string line, current;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "fixture") {
            ls >> current;
            continue;
        }
        if (key == "end") {
            current.clear();
            continue;
        }
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) vals.push_back(std::stod(tok));
        out[current][key] = vals;
    }
    return out;
}

}  // namespace qptest
