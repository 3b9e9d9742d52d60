// SPDX-License-Identifier: Apache-2.0
//
// Concatenated minimum-permutation character error rate over speaker-tagged
// transcripts. Hypothesis speakers are mapped injectively onto reference
// speakers (exhaustively, up to 8 speakers a side); unmapped hypothesis text
// counts as insertions, unfilled reference slots face the empty string. The
// denominator is the reference character count (spaces included, tags are
// routing metadata and excluded).
#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace duet::transcript {

using SpeakerTranscript = std::map<std::string, std::string>;  // tag -> text, tag order = map order

using Codepoints = std::vector<char32_t>;

inline Codepoints decode_utf8(const std::string& s) {
  Codepoints out;
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned char c = (unsigned char)s[i];
    char32_t cp = 0;
    int extra = 0;
    if (c < 0x80) {
      cp = c;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1f;
      extra = 1;
    } else if ((c >> 4) == 0xe) {
      cp = c & 0x0f;
      extra = 2;
    } else if ((c >> 3) == 0x1e) {
      cp = c & 0x07;
      extra = 3;
    } else {
      throw std::invalid_argument("transcript: invalid utf-8");
    }
    if (extra > 0 && i + std::size_t(extra) >= s.size())
      throw std::invalid_argument("transcript: truncated utf-8");
    for (int k = 1; k <= extra; ++k) {
      const unsigned char cc = (unsigned char)s[i + std::size_t(k)];
      if ((cc >> 6) != 0x2) throw std::invalid_argument("transcript: invalid utf-8 continuation");
      cp = (cp << 6) | (cc & 0x3f);
    }
    out.push_back(cp);
    i += std::size_t(extra) + 1;
  }
  return out;
}

inline std::size_t levenshtein(const Codepoints& a, const Codepoints& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline double cpcer(const SpeakerTranscript& reference, const SpeakerTranscript& hypothesis) {
  if (reference.empty()) throw std::domain_error("cpcer: empty reference");
  if (reference.size() > 8 || hypothesis.size() > 8)
    throw std::invalid_argument("cpcer: exhaustive matching supports at most 8 speakers");

  std::vector<Codepoints> ref_texts;
  Codepoints ref_concat;
  for (const auto& [tag, text] : reference) {
    ref_texts.push_back(decode_utf8(text));
    ref_concat.insert(ref_concat.end(), ref_texts.back().begin(), ref_texts.back().end());
  }
  if (ref_concat.empty()) throw std::domain_error("cpcer: reference has no characters");

  std::vector<Codepoints> hyp_texts;
  for (const auto& [tag, text] : hypothesis) hyp_texts.push_back(decode_utf8(text));

  const std::size_t n_ref = ref_texts.size();
  const std::size_t n_hyp = hyp_texts.size();
  const std::size_t mapped_count = std::min(n_ref, n_hyp);

  std::vector<int> assign(n_hyp, -1);  // hyp index -> ref slot, -1 unmapped
  std::vector<bool> used(n_ref, false);
  double best = std::numeric_limits<double>::infinity();

  auto evaluate = [&]() {
    Codepoints hyp_concat;
    std::vector<const Codepoints*> slot(n_ref, nullptr);
    std::size_t extra = 0;
    for (std::size_t h = 0; h < n_hyp; ++h) {
      if (assign[h] >= 0)
        slot[std::size_t(assign[h])] = &hyp_texts[h];
      else
        extra += hyp_texts[h].size();
    }
    for (std::size_t rslot = 0; rslot < n_ref; ++rslot)
      if (slot[rslot]) hyp_concat.insert(hyp_concat.end(), slot[rslot]->begin(), slot[rslot]->end());
    const double dist = double(levenshtein(ref_concat, hyp_concat)) + double(extra);
    best = std::min(best, dist);
  };

  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t h, std::size_t mapped) {
    if (h == n_hyp) {
      if (mapped == mapped_count) evaluate();
      return;
    }
    // mapping slots must not run out: remaining hyps must cover the quota
    if (mapped + (n_hyp - h) >= mapped_count && mapped < mapped_count) {
      for (std::size_t rslot = 0; rslot < n_ref; ++rslot) {
        if (used[rslot]) continue;
        used[rslot] = true;
        assign[h] = int(rslot);
        rec(h + 1, mapped + 1);
        used[rslot] = false;
        assign[h] = -1;
      }
    }
    if (mapped + (n_hyp - h) - 1 >= mapped_count) {
      assign[h] = -1;
      rec(h + 1, mapped);
    }
  };
  if (n_hyp == 0)
    best = double(ref_concat.size());  // everything deleted
  else
    rec(0, 0);
  return best / double(ref_concat.size());
}

}  // namespace duet::transcript
