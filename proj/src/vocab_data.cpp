#include "icr/vocab_data.hpp"

#include <algorithm>
#include <numeric>
#include <optional>

#include "icr/error.hpp"

namespace icr {

std::string to_string(WorldMode mode) {
    switch (mode) {
        case WorldMode::rejection: return "rejection";
        case WorldMode::affine: return "affine";
        case WorldMode::unconstrained: return "unconstrained";
    }
    return "?";
}

WorldMode world_mode_from_string(const std::string& s) {
    if (s == "rejection") return WorldMode::rejection;
    if (s == "affine") return WorldMode::affine;
    if (s == "unconstrained") return WorldMode::unconstrained;
    throw InvalidArgs("unknown world mode '" + s + "'");
}

std::string to_string(EmbeddingMode mode) {
    return mode == EmbeddingMode::one_hot ? "one-hot" : "random-orthonormal";
}

EmbeddingMode embedding_mode_from_string(const std::string& s) {
    if (s == "one-hot" || s == "one_hot") return EmbeddingMode::one_hot;
    if (s == "random-orthonormal" || s == "random_orthonormal") return EmbeddingMode::random_orthonormal;
    throw InvalidArgs("unknown embedding mode '" + s + "'");
}

long long identifiable_capacity(int n) { return static_cast<long long>(n) * (n - 1); }

namespace {

// Number of subjects on which two relation rows agree, stopping at 2.
int agreements(const int* a, const int* b, int n) {
    int c = 0;
    for (int s = 0; s < n && c < 2; ++s) c += (a[s] == b[s]);
    return c;
}

std::vector<int> random_permutation(int n, Rng& rng) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(p.begin(), p.end());
    return p;
}

// Finite field GF(p^e) with elements encoded as base-p digit strings.
class GaloisField {
public:
    static std::optional<GaloisField> make(int q) {
        int p = 0;
        for (int c = 2; c <= q; ++c) {
            if (q % c == 0) {
                p = c;
                break;
            }
        }
        if (p == 0) return std::nullopt;
        int e = 0;
        for (int x = q; x > 1; x /= p) {
            if (x % p != 0) return std::nullopt;
            ++e;
        }
        // Search monic degree-e polynomials for one that yields a field.
        int poly_count = 1;
        for (int i = 0; i < e; ++i) poly_count *= p;
        for (int low = 0; low < poly_count; ++low) {
            GaloisField f(p, e, q, low);
            if (f.is_field()) return f;
        }
        return std::nullopt;
    }

    int add(int x, int y) const {
        int out = 0, scale = 1;
        for (int i = 0; i < e_; ++i) {
            out += ((x % p_ + y % p_) % p_) * scale;
            x /= p_;
            y /= p_;
            scale *= p_;
        }
        return out;
    }

    int mul(int x, int y) const { return table_[static_cast<std::size_t>(x) * q_ + y]; }

private:
    GaloisField(int p, int e, int q, int low) : p_(p), e_(e), q_(q) {
        // modulus = X^e + sum low_i X^i
        std::vector<int> mod(static_cast<std::size_t>(e));
        for (int i = 0, t = low; i < e; ++i, t /= p) mod[static_cast<std::size_t>(i)] = t % p;
        table_.assign(static_cast<std::size_t>(q) * q, 0);
        for (int x = 0; x < q; ++x) {
            for (int y = 0; y < q; ++y) {
                std::vector<int> prod(static_cast<std::size_t>(2 * e), 0);
                std::vector<int> dx = digits(x), dy = digits(y);
                for (int i = 0; i < e; ++i)
                    for (int j = 0; j < e; ++j)
                        prod[static_cast<std::size_t>(i + j)] =
                            (prod[static_cast<std::size_t>(i + j)] + dx[i] * dy[j]) % p;
                for (int deg = 2 * e - 1; deg >= e; --deg) {
                    const int c = prod[static_cast<std::size_t>(deg)];
                    if (c == 0) continue;
                    prod[static_cast<std::size_t>(deg)] = 0;
                    for (int i = 0; i < e; ++i) {
                        auto& t = prod[static_cast<std::size_t>(deg - e + i)];
                        t = ((t - c * mod[static_cast<std::size_t>(i)]) % p + p) % p;
                    }
                }
                int v = 0, scale = 1;
                for (int i = 0; i < e; ++i, scale *= p) v += prod[static_cast<std::size_t>(i)] * scale;
                table_[static_cast<std::size_t>(x) * q + y] = v;
            }
        }
    }

    std::vector<int> digits(int x) const {
        std::vector<int> d(static_cast<std::size_t>(e_));
        for (int i = 0; i < e_; ++i, x /= p_) d[static_cast<std::size_t>(i)] = x % p_;
        return d;
    }

    bool is_field() const {
        for (int x = 1; x < q_; ++x) {
            bool inv = false;
            for (int y = 1; y < q_ && !inv; ++y) inv = (mul(x, y) == 1);
            if (!inv) return false;
        }
        return true;
    }

    int p_, e_, q_;
    std::vector<int> table_;
};

void build_rejection(KnowledgeWorld& w, long long max_retries, Rng& rng) {
    long long rejected = 0;
    while (static_cast<int>(w.table.size()) < w.m * w.n) {
        std::vector<int> cand = random_permutation(w.n, rng);
        bool ok = true;
        const int accepted = static_cast<int>(w.table.size()) / w.n;
        for (int r = 0; r < accepted && ok; ++r)
            ok = agreements(&w.table[static_cast<std::size_t>(r) * w.n], cand.data(), w.n) < 2;
        if (ok) {
            w.table.insert(w.table.end(), cand.begin(), cand.end());
        } else if (++rejected > max_retries) {
            throw CapacityExceeded("rejection sampling accepted " + std::to_string(accepted) +
                                   " of " + std::to_string(w.m) + " relations for n=" +
                                   std::to_string(w.n) + " before exhausting " +
                                   std::to_string(max_retries) +
                                   " rejected draws (try mode=affine for dense worlds)");
        }
    }
}

void build_affine(KnowledgeWorld& w, Rng& rng) {
    const auto field = GaloisField::make(w.n);
    if (!field) throw InvalidArgs("affine world mode needs a prime-power n, got " + std::to_string(w.n));
    std::vector<std::pair<int, int>> maps;
    for (int a = 1; a < w.n; ++a)
        for (int b = 0; b < w.n; ++b) maps.emplace_back(a, b);
    rng.shuffle(maps.begin(), maps.end());
    // Relabel subjects and answers so the world carries no visible field structure.
    const std::vector<int> subj = random_permutation(w.n, rng);
    const std::vector<int> ans = random_permutation(w.n, rng);
    for (int r = 0; r < w.m; ++r) {
        const auto [a, b] = maps[static_cast<std::size_t>(r)];
        for (int s = 0; s < w.n; ++s)
            w.table.push_back(ans[static_cast<std::size_t>(field->add(field->mul(a, subj[static_cast<std::size_t>(s)]), b))]);
    }
}

}  // namespace

KnowledgeWorld build_world(int n, int m, std::uint64_t seed, long long max_retries, WorldMode mode) {
    if (n < 3) throw InvalidArgs("n must be at least 3, got " + std::to_string(n));
    if (m < 1) throw InvalidArgs("m must be at least 1, got " + std::to_string(m));
    if (mode != WorldMode::unconstrained && m > identifiable_capacity(n)) {
        throw CapacityExceeded("m=" + std::to_string(m) + " exceeds the identifiable capacity n(n-1)=" +
                               std::to_string(identifiable_capacity(n)) + " for n=" + std::to_string(n));
    }
    KnowledgeWorld w;
    w.n = n;
    w.m = m;
    w.seed = seed;
    w.mode = mode;
    w.table.reserve(static_cast<std::size_t>(n) * m);
    Rng rng = Rng::derive(seed, stream::world);
    switch (mode) {
        case WorldMode::rejection: build_rejection(w, max_retries, rng); break;
        case WorldMode::affine: build_affine(w, rng); break;
        case WorldMode::unconstrained:
            for (int r = 0; r < m; ++r) {
                const auto p = random_permutation(n, rng);
                w.table.insert(w.table.end(), p.begin(), p.end());
            }
            break;
    }
    return w;
}

bool check_identifiability(const KnowledgeWorld& world) {
    for (int r1 = 0; r1 < world.m; ++r1)
        for (int r2 = r1 + 1; r2 < world.m; ++r2)
            if (agreements(&world.table[static_cast<std::size_t>(r1) * world.n],
                           &world.table[static_cast<std::size_t>(r2) * world.n], world.n) >= 2)
                return false;
    return true;
}

bool rows_are_permutations(const KnowledgeWorld& world) {
    for (int r = 0; r < world.m; ++r) {
        std::vector<int> row(world.table.begin() + static_cast<std::ptrdiff_t>(r) * world.n,
                             world.table.begin() + static_cast<std::ptrdiff_t>(r + 1) * world.n);
        std::sort(row.begin(), row.end());
        for (int s = 0; s < world.n; ++s)
            if (row[static_cast<std::size_t>(s)] != s) return false;
    }
    return true;
}

EmbeddingBasis make_basis(const KnowledgeWorld& world, int k, EmbeddingMode mode, std::uint64_t seed) {
    EmbeddingBasis b;
    b.d = world.vocab_size();
    b.d_p = 2 * k + 3;
    b.mode = mode;
    if (mode == EmbeddingMode::one_hot) {
        b.phi = Matrix::identity(static_cast<std::size_t>(b.d));
    } else {
        Rng rng = Rng::derive(seed, stream::embedding);
        // Columns of Q are orthonormal; rows of Q^T serve as embeddings.
        b.phi = random_orthogonal(static_cast<std::size_t>(b.d), rng).transpose();
    }
    return b;
}

IcSequence make_ic_sequence(const KnowledgeWorld& world, int relation, const std::vector<int>& subjects) {
    const int k = static_cast<int>(subjects.size()) - 1;
    if (k < 1) throw InvalidArgs("a sequence needs at least one in-context example");
    if (relation < 0 || relation >= world.m) throw InvalidArgs("relation index out of range");
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        if (!world.is_subject(subjects[i])) throw InvalidArgs("subject index out of range");
        for (std::size_t j = 0; j < i; ++j)
            if (subjects[i] == subjects[j]) throw InvalidArgs("subjects in a sequence must be distinct");
    }
    IcSequence seq;
    seq.k = k;
    seq.relation = relation;
    for (int i = 0; i < k; ++i) {
        seq.tokens.push_back(world.subject_token(subjects[static_cast<std::size_t>(i)]));
        seq.tokens.push_back(world.answer_token(world.answer(relation, subjects[static_cast<std::size_t>(i)])));
    }
    seq.tokens.push_back(world.subject_token(subjects[static_cast<std::size_t>(k)]));
    seq.tokens.push_back(world.eos());
    seq.target_answer = world.answer_token(world.answer(relation, subjects[static_cast<std::size_t>(k)]));
    if (k == 2) {
        seq.flags = classify_sequence(world, seq);
        seq.has_flags = true;
    }
    return seq;
}

IcSequence sample_ic_sequence(const KnowledgeWorld& world, int k, Rng& rng) {
    if (k < 1 || k + 1 > world.n)
        throw InvalidArgs("k+1 = " + std::to_string(k + 1) + " distinct subjects need k+1 <= n = " +
                          std::to_string(world.n));
    const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(world.m)));
    std::vector<int> pool(static_cast<std::size_t>(world.n));
    std::iota(pool.begin(), pool.end(), 0);
    // Partial Fisher-Yates: the first k+1 slots become a uniform ordered draw.
    for (int i = 0; i <= k; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.below(static_cast<std::uint64_t>(world.n - i));
        std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
    }
    pool.resize(static_cast<std::size_t>(k + 1));
    return make_ic_sequence(world, r, pool);
}

long long ic_sequence_count(const KnowledgeWorld& world, int k) {
    long long c = world.m;
    for (int i = 0; i <= k; ++i) c *= (world.n - i);
    return c;
}

void for_each_ic_sequence(const KnowledgeWorld& world, int k, const std::function<void(const IcSequence&)>& fn) {
    if (k < 1 || k + 1 > world.n) throw InvalidArgs("k+1 must not exceed n");
    std::vector<int> subjects(static_cast<std::size_t>(k + 1));
    std::vector<char> used(static_cast<std::size_t>(world.n), 0);
    for (int r = 0; r < world.m; ++r) {
        // Depth-first over ordered tuples of distinct subjects.
        auto rec = [&](auto&& self, int depth) -> void {
            if (depth == k + 1) {
                fn(make_ic_sequence(world, r, subjects));
                return;
            }
            for (int s = 0; s < world.n; ++s) {
                if (used[static_cast<std::size_t>(s)]) continue;
                used[static_cast<std::size_t>(s)] = 1;
                subjects[static_cast<std::size_t>(depth)] = s;
                self(self, depth + 1);
                used[static_cast<std::size_t>(s)] = 0;
            }
        };
        rec(rec, 0);
    }
}

std::vector<IcSequence> enumerate_ic_sequences(const KnowledgeWorld& world, int k) {
    std::vector<IcSequence> out;
    if (k >= 1 && k + 1 <= world.n) out.reserve(static_cast<std::size_t>(ic_sequence_count(world, k)));
    for_each_ic_sequence(world, k, [&](const IcSequence& s) { out.push_back(s); });
    return out;
}

SequenceFlags classify_sequence(const KnowledgeWorld& world, const IcSequence& seq) {
    if (seq.k != 2) throw Unsupported("sequence classification is defined for k = 2 only");
    const int s1 = seq.subject(0), s2 = seq.subject(1), s3 = seq.subject(2);
    const int a1 = seq.answer(0) - world.n, a2 = seq.answer(1) - world.n;
    SequenceFlags f;
    for (int r = 0; r < world.m; ++r) {
        const int r1 = world.answer(r, s1), r2 = world.answer(r, s2), r3 = world.answer(r, s3);
        if (r1 == a2 && r2 == a1) f.confusing = true;
        // Number of (subject -> in-context answer) assignments the relation satisfies.
        const int hits = (r1 == a1) + (r1 == a2) + (r2 == a1) + (r2 == a2) + (r3 == a1) + (r3 == a2);
        if (hits >= 2) {
            ++f.two_matching_count;
            if (r3 == a1 || r3 == a2) f.mismatched = true;
        }
    }
    return f;
}

DatasetStats dataset_stats(const std::vector<IcSequence>& data) {
    DatasetStats st;
    st.sample_count = data.size();
    if (data.empty()) return st;
    std::size_t conf = 0, mis = 0;
    for (const auto& s : data) {
        conf += s.flags.confusing;
        mis += s.flags.mismatched;
    }
    st.p_conf = static_cast<double>(conf) / static_cast<double>(data.size());
    st.p_mis = static_cast<double>(mis) / static_cast<double>(data.size());
    return st;
}

std::vector<IcSequence> sample_dataset(const KnowledgeWorld& world, int k, std::size_t count, Rng& rng) {
    std::vector<IcSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(sample_ic_sequence(world, k, rng));
    return out;
}

namespace {

PretrainSample make_pretrain(const KnowledgeWorld& world, int s, int r, int dropped, bool swap) {
    PretrainSample p;
    p.subject = s;
    p.relation = r;
    p.answer = world.answer(r, s);
    p.dropped = dropped;
    const std::array<int, 3> trip{world.subject_token(s), world.relation_token(r),
                                  world.answer_token(p.answer)};
    int j = 0;
    for (int i = 0; i < 3; ++i)
        if (i != dropped) p.input[static_cast<std::size_t>(j++)] = trip[static_cast<std::size_t>(i)];
    if (swap) std::swap(p.input[0], p.input[1]);
    p.target = trip[static_cast<std::size_t>(dropped)];
    return p;
}

}  // namespace

PretrainSample sample_pretrain_sequence(const KnowledgeWorld& world, Rng& rng) {
    const int s = static_cast<int>(rng.below(static_cast<std::uint64_t>(world.n)));
    const int r = static_cast<int>(rng.below(static_cast<std::uint64_t>(world.m)));
    const int dropped = static_cast<int>(rng.below(3));
    const bool swap = rng.below(2) == 1;
    return make_pretrain(world, s, r, dropped, swap);
}

std::vector<PretrainSample> enumerate_pretrain_set(const KnowledgeWorld& world) {
    std::vector<PretrainSample> out;
    out.reserve(static_cast<std::size_t>(6) * world.n * world.m);
    for (int r = 0; r < world.m; ++r)
        for (int s = 0; s < world.n; ++s)
            for (int dropped = 0; dropped < 3; ++dropped)
                for (int swap = 0; swap < 2; ++swap) out.push_back(make_pretrain(world, s, r, dropped, swap == 1));
    return out;
}

}  // namespace icr
