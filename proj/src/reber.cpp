#include "rsm/reber.hpp"

#include <algorithm>
#include <array>

namespace rsm {

namespace {
constexpr std::array<char, 7> kChars = {'B', 'T', 'P', 'S', 'X', 'V', 'E'};

// Inner Reber graph. State 0 is its B-entry; state 6 emits E and accepts.
//   0 -B-> 1
//   1 -T-> 2 | -P-> 3
//   2 -S-> 2 | -X-> 4
//   3 -T-> 3 | -V-> 5
//   4 -X-> 3 | -S-> 6
//   5 -P-> 4 | -V-> 6
//   6 -E-> accept
struct Edge {
    int symbol;
    int next;
};
constexpr std::array<std::array<Edge, 2>, 7> kInner = {{
    {{{kB, 1}, {-1, -1}}},
    {{{kT, 2}, {kP, 3}}},
    {{{kS, 2}, {kX, 4}}},
    {{{kT, 3}, {kV, 5}}},
    {{{kX, 3}, {kS, 6}}},
    {{{kP, 4}, {kV, 6}}},
    {{{kE, -2}, {-1, -1}}},   // -2 marks inner acceptance
}};
} // namespace

char reber_char(int symbol) { return kChars[static_cast<size_t>(symbol)]; }

int reber_index(char symbol) {
    for (int i = 0; i < kReberSymbolCount; ++i) {
        if (kChars[static_cast<size_t>(i)] == symbol) return i;
    }
    return -1;
}

void ReberGrammar::Walker::reset() {
    state_ = kStart;
    fork_ = -1;
}

std::vector<int> ReberGrammar::Walker::legal() const {
    switch (state_) {
        case kStart: return {kB};
        case kOuterFork: return {kT, kP};
        case kInnerStart: return {kB};
        case kCloseFork: return {fork_};
        case kFinal: return {kE};
        case kDone:
        case kDead: return {};
        default: break;
    }
    const int inner = state_ - kInner1 + 1;   // inner graph states 1..6
    if (inner == 6) return {kE};
    std::vector<int> out;
    for (const Edge& e : kInner[static_cast<size_t>(inner)]) {
        if (e.symbol >= 0) out.push_back(e.symbol);
    }
    return out;
}

bool ReberGrammar::Walker::feed(int symbol) {
    switch (state_) {
        case kStart:
            if (symbol == kB) { state_ = kOuterFork; return true; }
            break;
        case kOuterFork:
            if (symbol == kT || symbol == kP) {
                fork_ = symbol;
                state_ = kInnerStart;
                return true;
            }
            break;
        case kInnerStart:
            if (symbol == kB) { state_ = kInner1; return true; }
            break;
        case kCloseFork:
            if (symbol == fork_) { state_ = kFinal; return true; }
            break;
        case kFinal:
            if (symbol == kE) { state_ = kDone; return true; }
            break;
        case kDone:
        case kDead:
            break;
        default: {
            const int inner = state_ - kInner1 + 1;
            if (inner == 6) {
                if (symbol == kE) { state_ = kCloseFork; return true; }
                break;
            }
            for (const Edge& e : kInner[static_cast<size_t>(inner)]) {
                if (e.symbol == symbol && e.next >= 1) {
                    state_ = static_cast<State>(kInner1 + e.next - 1);
                    return true;
                }
            }
            break;
        }
    }
    state_ = kDead;
    return false;
}

std::vector<int> ReberGrammar::sample(Prng& rng) const {
    Walker w;
    std::vector<int> out;
    while (!w.done()) {
        std::vector<int> options = w.legal();
        const int pick = options.size() == 1 ? options[0]
                                             : options[static_cast<size_t>(rng.next_below(
                                                   static_cast<int>(options.size())))];
        w.feed(pick);
        out.push_back(pick);
    }
    return out;
}

bool ReberGrammar::accepts(const std::vector<int>& symbols) const {
    Walker w;
    for (int s : symbols) {
        if (!w.feed(s)) return false;
    }
    return w.done();
}

void reber_one_hot(Tensor& dst, int row, int symbol) {
    float* p = dst.data() + static_cast<int64_t>(row) * kReberSymbolCount;
    for (int i = 0; i < kReberSymbolCount; ++i) p[i] = 0.0f;
    p[symbol] = 1.0f;
}

std::string reber_string(const std::vector<int>& symbols) {
    std::string s;
    s.reserve(symbols.size());
    for (int v : symbols) s.push_back(reber_char(v));
    return s;
}

ErgEvalResult erg_evaluate(SequencePredictor& model, int n_sequences, Prng& rng,
                           bool reset_between_sequences) {
    ReberGrammar grammar;
    ErgEvalResult res;
    res.sequences = n_sequences;
    int correct = 0;
    int fork_correct = 0;
    model.reset();
    for (int n = 0; n < n_sequences; ++n) {
        if (reset_between_sequences) model.reset();
        std::vector<int> seq = grammar.sample(rng);
        ReberGrammar::Walker walker;
        bool all_ok = true;
        bool fork_ok = true;
        for (size_t t = 0; t + 1 < seq.size(); ++t) {
            walker.feed(seq[t]);
            const bool scoring_fork = walker.at_final_fork();
            std::vector<int> legal = walker.legal();
            std::vector<float> probs = model.feed(seq[t]);
            const float threshold = 0.5f / static_cast<float>(legal.size());
            bool step_ok = true;
            for (int s = 0; s < kReberSymbolCount; ++s) {
                const bool is_legal =
                    std::find(legal.begin(), legal.end(), s) != legal.end();
                const bool predicted = probs[static_cast<size_t>(s)] > threshold;
                if (is_legal != predicted) {
                    step_ok = false;
                    break;
                }
            }
            if (!step_ok) {
                all_ok = false;
                if (scoring_fork) fork_ok = false;
            }
        }
        // feed the final symbol so state flows into the next sequence
        if (!seq.empty()) model.feed(seq.back());
        if (all_ok) ++correct;
        if (fork_ok) ++fork_correct;
    }
    res.sequence_accuracy = n_sequences > 0 ? static_cast<double>(correct) / n_sequences : 0.0;
    res.final_fork_accuracy =
        n_sequences > 0 ? static_cast<double>(fork_correct) / n_sequences : 0.0;
    return res;
}

} // namespace rsm
