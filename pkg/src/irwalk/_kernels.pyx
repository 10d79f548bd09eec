# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled run loops.

Each entry point mirrors the pure-Python engines draw for draw: the
same uniforms are consumed in the same order through the shared bit
generator, so both backends produce identical trajectories from the
same seed.  Bernoulli fixed tests draw one binomial variate per child;
everything else consumes uniforms one at a time (exponentials through
the inverse CDF).
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport log, log1p
from libc.string cimport memset

import numpy as np

cimport numpy as cnp
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (binomial_t, random_binomial,
                                           random_standard_uniform)

cnp.import_array()

cdef int V_H0 = 0
cdef int V_H1 = 1
cdef int V_H2 = 2
cdef int V_H3 = 3


cdef inline double _exp_draw(bitgen_t *bg, double rate) noexcept nogil:
    return -log1p(-random_standard_uniform(bg)) / rate


cdef inline double _rate(double lam_g, double lam_f, int level,
                         long long d) noexcept nogil:
    return d * lam_g + ((<long long>1 << level) - d) * lam_f


cdef inline int _before(double[::1] scores, cnp.int32_t a,
                        cnp.int32_t b) noexcept nogil:
    if scores[a] > scores[b]:
        return 1
    if scores[a] == scores[b] and a < b:
        return 1
    return 0


cdef int _single_test(bitgen_t *bg, binomial_t *binom, int family,
                      int test_kind, double mu_cl, double lam_g,
                      double lam_f, int cl, long long d_l, long long d_r,
                      long long k, long long cap_factor, double g_up,
                      double g_lo, double nu_up, double nu_lo,
                      long long *used_out, long long *trunc_out,
                      ) noexcept nogil:
    cdef double step_up, step_dn, drift, r1, r0, rt_l, rt_r
    cdef double mean_p, mean_a, mean_l, mean_r
    cdef double s_l = 0.0, s_r = 0.0, y, u
    cdef long long a, i, used, cap, used_l, used_r
    cdef int crossed, hit_l, hit_r, any_trunc

    if family == 0:
        # Match the reference llr float for float: the up and down steps
        # are separate log evaluations, not negations of each other.
        mean_p = 1.0 - mu_cl
        mean_a = mu_cl
        step_up = log(mean_p / mean_a)
        step_dn = log((1.0 - mean_p) / (1.0 - mean_a))
        drift = 0.0
        mean_l = mean_p if d_l > 0 else mean_a
        mean_r = mean_p if d_r > 0 else mean_a
        rt_l = rt_r = 0.0
    else:
        r1 = _rate(lam_g, lam_f, cl, 1)
        r0 = _rate(lam_g, lam_f, cl, 0)
        step_up = log(r1 / r0)
        step_dn = 0.0
        drift = r1 - r0
        rt_l = _rate(lam_g, lam_f, cl, d_l)
        rt_r = _rate(lam_g, lam_f, cl, d_r)
        mean_l = mean_r = 0.0

    if test_kind == 0:
        if family == 0:
            a = random_binomial(bg, mean_l, k, binom)
            s_l = a * step_up + (k - a) * step_dn
            a = random_binomial(bg, mean_r, k, binom)
            s_r = a * step_up + (k - a) * step_dn
        else:
            for i in range(k):
                s_l += step_up - drift * _exp_draw(bg, rt_l)
            for i in range(k):
                s_r += step_up - drift * _exp_draw(bg, rt_r)
        used_out[0] = 2 * k
        if s_l <= 0.0 and s_r <= 0.0:
            return V_H0
        if s_l >= s_r:
            return V_H1
        return V_H2

    if test_kind == 1:
        cap = cap_factor * k
        used_l = 0
        crossed = 0
        hit_l = 0
        any_trunc = 0
        while used_l < cap:
            if family == 0:
                u = random_standard_uniform(bg)
                s_l += step_up if u < mean_l else step_dn
            else:
                s_l += step_up - drift * _exp_draw(bg, rt_l)
            used_l += 1
            if s_l >= g_up:
                crossed = 1
                hit_l = 1
                break
            if s_l <= g_lo:
                crossed = 1
                break
        if not crossed:
            any_trunc = 1
            hit_l = 1 if s_l > 0.0 else 0
        if hit_l:
            used_out[0] = used_l
            trunc_out[0] += any_trunc
            return V_H1
        used_r = 0
        crossed = 0
        hit_r = 0
        while used_r < cap:
            if family == 0:
                u = random_standard_uniform(bg)
                s_r += step_up if u < mean_r else step_dn
            else:
                s_r += step_up - drift * _exp_draw(bg, rt_r)
            used_r += 1
            if s_r >= g_up:
                crossed = 1
                hit_r = 1
                break
            if s_r <= g_lo:
                crossed = 1
                break
        if not crossed:
            any_trunc = 1
            hit_r = 1 if s_r > 0.0 else 0
        used_out[0] = used_l + used_r
        trunc_out[0] += any_trunc
        if hit_r:
            return V_H2
        return V_H0

    # adaptive allocation
    cap = 2 * cap_factor * k
    used = 0
    while used < cap:
        if s_l >= s_r:
            if family == 0:
                u = random_standard_uniform(bg)
                s_l += step_up if u < mean_l else step_dn
            else:
                s_l += step_up - drift * _exp_draw(bg, rt_l)
        else:
            if family == 0:
                u = random_standard_uniform(bg)
                s_r += step_up if u < mean_r else step_dn
            else:
                s_r += step_up - drift * _exp_draw(bg, rt_r)
        used += 1
        if s_l >= nu_up:
            used_out[0] = used
            return V_H1
        if s_r >= nu_up:
            used_out[0] = used
            return V_H2
        if (s_l if s_l >= s_r else s_r) <= nu_lo:
            used_out[0] = used
            return V_H0
    trunc_out[0] += 1
    used_out[0] = used
    if s_l > 0.0 or s_r > 0.0:
        return V_H1 if s_l >= s_r else V_H2
    return V_H0


cdef int _sign_test(bitgen_t *bg, double lam_g, double lam_f, int cl,
                    long long dd_l, long long dd_r, long long dt_l,
                    long long dt_r, int skip_l, int skip_r, long long k_l,
                    long long k_r, long long *used_out) noexcept nogil:
    cdef double s_l = 0.0, s_r = 0.0, step, drift, r1, r0, rt
    cdef long long i, used = 0
    cdef int pos_l, pos_r
    if not skip_l:
        r1 = _rate(lam_g, lam_f, cl, dd_l + 1)
        r0 = _rate(lam_g, lam_f, cl, dd_l)
        step = log(r1 / r0)
        drift = r1 - r0
        rt = _rate(lam_g, lam_f, cl, dt_l)
        for i in range(k_l):
            s_l += step - drift * _exp_draw(bg, rt)
        used += k_l
    if not skip_r:
        r1 = _rate(lam_g, lam_f, cl, dd_r + 1)
        r0 = _rate(lam_g, lam_f, cl, dd_r)
        step = log(r1 / r0)
        drift = r1 - r0
        rt = _rate(lam_g, lam_f, cl, dt_r)
        for i in range(k_r):
            s_r += step - drift * _exp_draw(bg, rt)
        used += k_r
    used_out[0] = used
    pos_l = 1 if (not skip_l and s_l > 0.0) else 0
    pos_r = 1 if (not skip_r and s_r > 0.0) else 0
    if pos_l and pos_r:
        return V_H3
    if pos_l:
        return V_H1
    if pos_r:
        return V_H2
    return V_H0


cdef void _walk_core(bitgen_t *bg, binomial_t *binom, int mode, int family,
                     int test_kind, long long M, int top,
                     double leaf_thresh, double log_c, double g_up,
                     double g_lo, double nu_up, double nu_lo,
                     long long known_L, long long max_samples,
                     long long cap_factor, double[::1] mu_levels,
                     double lam_g, double lam_f, cnp.int64_t[::1] k_fixed,
                     cnp.int64_t[::1] ks_flat, cnp.int64_t[::1] ks_off,
                     cnp.int64_t[::1] ks_w, cnp.int32_t[::1] cnt_flat,
                     cnp.int32_t[::1] decl_flat, cnp.int64_t[::1] lvl_off,
                     cnp.int32_t[::1] declared_out, cnp.int64_t[::1] out,
                     ) noexcept nogil:
    cdef long long total = 0, leaf_s = 0, test_s = 0, term_s = 0
    cdef long long loc_trunc = 0, passes = 0, n_decl = 0
    cdef long long level, idx, li, ri, cap_child, d, k, k_l, k_r
    cdef long long dd_l, dd_r, used, w, l_hat, true_root
    cdef int verdict, hit, done, resumed, skip_l, skip_r, cl, l
    cdef double s, y, u, step0, drift0, mean_t, rt, r1, r0, mu0
    cdef double step, drift

    true_root = cnt_flat[lvl_off[top]]
    done = 0
    while not done and total < max_samples:
        if mode == 0 and n_decl >= 1:
            break
        if mode == 1 and n_decl >= known_L:
            break
        if mode == 2 and n_decl >= M:
            break
        passes += 1
        level = top
        idx = 0
        while total < max_samples:
            if level == 0:
                d = cnt_flat[lvl_off[0] + idx]
                s = 0.0
                hit = 0
                if family == 0:
                    mu0 = mu_levels[0]
                    step0 = log((1.0 - mu0) / mu0)
                    drift0 = log((1.0 - (1.0 - mu0)) / (1.0 - mu0))
                    mean_t = 1.0 - mu0 if d > 0 else mu0
                    while total < max_samples:
                        u = random_standard_uniform(bg)
                        total += 1
                        leaf_s += 1
                        s += step0 if u < mean_t else drift0
                        if s >= leaf_thresh:
                            hit = 1
                            break
                        if s < 0.0:
                            break
                else:
                    r1 = _rate(lam_g, lam_f, 0, 1)
                    r0 = _rate(lam_g, lam_f, 0, 0)
                    step0 = log(r1 / r0)
                    drift0 = r1 - r0
                    rt = _rate(lam_g, lam_f, 0, d)
                    while total < max_samples:
                        y = _exp_draw(bg, rt)
                        total += 1
                        leaf_s += 1
                        s += step0 - drift0 * y
                        if s >= leaf_thresh:
                            hit = 1
                            break
                        if s < 0.0:
                            break
                if hit:
                    declared_out[n_decl] = <cnp.int32_t>idx
                    n_decl += 1
                    if mode != 0:
                        for l in range(top + 1):
                            decl_flat[lvl_off[l] + (idx >> l)] += 1
                    break
                level = 1
                idx = idx >> 1
                continue

            cl = <int>(level - 1)
            li = 2 * idx
            ri = li + 1
            used = 0
            if mode == 0:
                k = k_fixed[level]
                verdict = _single_test(
                    bg, binom, family, test_kind,
                    mu_levels[cl] if family == 0 else 0.0, lam_g, lam_f,
                    cl, cnt_flat[lvl_off[cl] + li], cnt_flat[lvl_off[cl] + ri],
                    k, cap_factor, g_up, g_lo, nu_up, nu_lo, &used,
                    &loc_trunc)
            else:
                cap_child = <long long>1 << cl
                dd_l = decl_flat[lvl_off[cl] + li]
                dd_r = decl_flat[lvl_off[cl] + ri]
                skip_l = 1 if dd_l >= cap_child else 0
                skip_r = 1 if dd_r >= cap_child else 0
                w = ks_w[level]
                k_l = ks_flat[ks_off[level] + (dd_l if dd_l < w - 1 else w - 1)]
                k_r = ks_flat[ks_off[level] + (dd_r if dd_r < w - 1 else w - 1)]
                verdict = _sign_test(
                    bg, lam_g, lam_f, cl, dd_l, dd_r,
                    cnt_flat[lvl_off[cl] + li], cnt_flat[lvl_off[cl] + ri],
                    skip_l, skip_r, k_l, k_r, &used)
            test_s += used
            total += used

            if verdict == V_H0 and level == top and mode == 2:
                l_hat = n_decl
                r1 = _rate(lam_g, lam_f, top, l_hat + 1)
                r0 = _rate(lam_g, lam_f, top, l_hat)
                step = log(r1 / r0)
                drift = r1 - r0
                rt = _rate(lam_g, lam_f, top, true_root)
                s = 0.0
                resumed = 0
                while total < max_samples:
                    y = _exp_draw(bg, rt)
                    term_s += 1
                    total += 1
                    s += step - drift * y
                    if s > 0.0:
                        resumed = 1
                        break
                    if s <= log_c:
                        break
                if not resumed:
                    done = 1
                break

            if verdict == V_H1:
                level -= 1
                idx = li
            elif verdict == V_H2:
                level -= 1
                idx = ri
            elif verdict == V_H3:
                u = random_standard_uniform(bg)
                level -= 1
                idx = li if u < 0.5 else ri
            else:
                if level < top:
                    level += 1
                    idx = idx >> 1

    out[0] = total
    out[1] = leaf_s
    out[2] = test_s
    out[3] = term_s
    out[4] = loc_trunc
    out[5] = passes
    out[6] = 1 if total >= max_samples else 0
    out[7] = n_decl


cdef bitgen_t *_get_bitgen(object rng) except NULL:
    capsule = rng.bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("invalid BitGenerator capsule")
    return <bitgen_t *>PyCapsule_GetPointer(capsule, "BitGenerator")


def run_walk(object rng, int mode, int family, int test_kind, long long M,
             int top, double leaf_thresh, double log_c, double g_up,
             double g_lo, double nu_up, double nu_lo, long long known_L,
             long long max_samples, long long cap_factor,
             double[::1] mu_levels, double lam_g, double lam_f,
             cnp.int64_t[::1] k_fixed, cnp.int64_t[::1] ks_flat,
             cnp.int64_t[::1] ks_off, cnp.int64_t[::1] ks_w,
             cnp.int32_t[::1] leaves, cnp.int32_t[::1] cnt_flat,
             cnp.int32_t[::1] decl_flat, cnp.int64_t[::1] lvl_off,
             cnp.int32_t[::1] declared_out, cnp.int64_t[::1] out):
    """Run one tree-walk replication; results land in the out arrays."""
    cdef bitgen_t *bg = _get_bitgen(rng)
    cdef binomial_t binom
    cdef long long i, n_nodes = cnt_flat.shape[0]
    cdef int l
    memset(&binom, 0, sizeof(binomial_t))
    for i in range(n_nodes):
        cnt_flat[i] = 0
        decl_flat[i] = 0
    for i in range(leaves.shape[0]):
        for l in range(top + 1):
            cnt_flat[lvl_off[l] + (leaves[i] >> l)] += 1
    with nogil:
        _walk_core(bg, &binom, mode, family, test_kind, M, top, leaf_thresh,
                   log_c, g_up, g_lo, nu_up, nu_lo, known_L, max_samples,
                   cap_factor, mu_levels, lam_g, lam_f, k_fixed, ks_flat,
                   ks_off, ks_w, cnt_flat, decl_flat, lvl_off, declared_out,
                   out)


cdef void _flat_core(bitgen_t *bg, int family, long long M, long long L,
                     double thresh, double mu0, double lam_g, double lam_f,
                     int front, long long max_samples,
                     cnp.int32_t[::1] cnt0, double[::1] scores,
                     cnp.uint8_t[::1] undeclared, cnp.int32_t[::1] order,
                     cnp.uint8_t[::1] emask, cnp.int32_t[::1] elig,
                     cnp.int32_t[::1] declared_out, cnp.int64_t[::1] out,
                     ) noexcept nogil:
    cdef long long total = 0, n_decl = 0, l_rem = L, n_und = M
    cdef long long t, n_elig, pick, pos, jj
    cdef cnp.int32_t j, tmp
    cdef double step, step_dn, drift, r1, r0, u, y, s
    cdef int trunc = 0

    for t in range(M):
        scores[t] = 0.0
        undeclared[t] = 1
        order[t] = <cnp.int32_t>t
        emask[t] = 0
    if family == 0:
        step = log((1.0 - mu0) / mu0)
        step_dn = log((1.0 - (1.0 - mu0)) / (1.0 - mu0))
        drift = 0.0
    else:
        r1 = _rate(lam_g, lam_f, 0, 1)
        r0 = _rate(lam_g, lam_f, 0, 0)
        step = log(r1 / r0)
        step_dn = 0.0
        drift = r1 - r0

    while l_rem > 0:
        if total >= max_samples:
            trunc = 1
            break
        if front:
            for t in range(l_rem):
                emask[order[t]] = 1
        else:
            for t in range(l_rem, n_und):
                emask[order[t]] = 1
            for t in range(l_rem):
                if scores[order[t]] >= 0.0:
                    emask[order[t]] = 1
        n_elig = 0
        for t in range(M):
            if emask[t]:
                elig[n_elig] = <cnp.int32_t>t
                n_elig += 1
                emask[t] = 0
        u = random_standard_uniform(bg)
        pick = <long long>(u * n_elig)
        if pick >= n_elig:
            pick = n_elig - 1
        j = elig[pick]
        if family == 0:
            u = random_standard_uniform(bg)
            if cnt0[j] > 0:
                y = 1.0 if u < 1.0 - mu0 else 0.0
            else:
                y = 1.0 if u < mu0 else 0.0
            s = step if y == 1.0 else step_dn
        else:
            y = _exp_draw(bg, _rate(lam_g, lam_f, 0, cnt0[j]))
            s = step - drift * y
        total += 1
        scores[j] += s

        pos = 0
        for t in range(n_und):
            if order[t] == j:
                pos = t
                break
        if scores[j] >= thresh:
            undeclared[j] = 0
            declared_out[n_decl] = j
            n_decl += 1
            l_rem -= 1
            for t in range(pos, n_und - 1):
                order[t] = order[t + 1]
            n_und -= 1
        else:
            while pos > 0 and _before(scores, order[pos], order[pos - 1]):
                tmp = order[pos]
                order[pos] = order[pos - 1]
                order[pos - 1] = tmp
                pos -= 1
            while pos < n_und - 1 and _before(scores, order[pos + 1],
                                              order[pos]):
                tmp = order[pos]
                order[pos] = order[pos + 1]
                order[pos + 1] = tmp
                pos += 1

    out[0] = total
    out[1] = total
    out[2] = 0
    out[3] = 0
    out[4] = 0
    out[5] = 1
    out[6] = trunc
    out[7] = n_decl


def run_flat(object rng, int family, long long M, long long L,
             double thresh, double mu0, double lam_g, double lam_f,
             int front, long long max_samples, cnp.int32_t[::1] cnt0,
             double[::1] scores, cnp.uint8_t[::1] undeclared,
             cnp.int32_t[::1] order, cnp.uint8_t[::1] emask,
             cnp.int32_t[::1] elig, cnp.int32_t[::1] declared_out,
             cnp.int64_t[::1] out):
    """Run one flat-probing replication; results land in the out arrays."""
    cdef bitgen_t *bg = _get_bitgen(rng)
    with nogil:
        _flat_core(bg, family, M, L, thresh, mu0, lam_g, lam_f, front,
                   max_samples, cnt0, scores, undeclared, order, emask,
                   elig, declared_out, out)
