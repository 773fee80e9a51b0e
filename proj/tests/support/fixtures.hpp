#pragma once

#include <sstream>
#include <string>

namespace aquacal::testing {

// 6x6 junction grid fed by one reservoir. 60 internal edges minus three
// removed (none of them bridges) plus the feed pipe gives 58 pipes and
// 36 junctions, matching the benchmark layout counts.
inline std::string grid_fixture_inp() {
    std::ostringstream os;
    os << "[TITLE]\ngrid fixture\n\n[JUNCTIONS]\n";
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c)
            os << "J" << r << c << '\t' << (64.0 + r + 0.5 * c) << "\t0.5\tday\n";
    os << "\n[RESERVOIRS]\nR1\t121.00\n\n[PIPES]\n";
    int pid = 1;
    auto pipe = [&](const std::string& a, const std::string& b) {
        os << 'P' << pid++ << '\t' << a << '\t' << b << "\t100\t100\t0.0015\t0\tOpen\n";
    };
    auto jid = [](int r, int c) {
        return "J" + std::to_string(r) + std::to_string(c);
    };
    pipe("R1", jid(0, 0));
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) {
            bool skip_right = (r == 1 && c == 1) || (r == 3 && c == 2);
            bool skip_down = (r == 4 && c == 4);
            if (c < 5 && !skip_right) pipe(jid(r, c), jid(r, c + 1));
            if (r < 5 && !skip_down) pipe(jid(r, c), jid(r + 1, c));
        }
    os << "\n[PATTERNS]\n";
    os << "day\t0.6\t0.8\t1.2\t1.4\t1.0\t1.0\n";
    os << "day\t1.1\t0.9\t0.8\t0.7\t0.8\t0.7\n";
    os << "\n[OPTIONS]\nUnits\tLPS\nHeadloss\tD-W\n";
    os << "\n[TIMES]\nDuration\t24\tHOURS\nHydraulic Timestep\t1\tHOURS\nPattern Timestep\t4\tHOURS\n";
    os << "\n[TAGS]\nPIPE\tP1\tmaterial=PE\nNODE\tJ00\tzone=west\n";
    os << "\n[END]\n";
    return os.str();
}

} // namespace aquacal::testing
