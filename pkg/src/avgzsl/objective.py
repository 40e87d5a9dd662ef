"""Composite training loss over a forward trace.

Three components, summed unweighted: a cross-entropy over raw dot-product
logits between the audio-visual and class projections, a reconstruction
error pulling both decoder outputs toward the encoded label embedding of
each sample's class, and a regression error pulling the two projections
together. Each component also reports its gradients with respect to the
trace tensors so the model backward can accumulate them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ConfigError
from .model import ForwardTrace, TraceGrads
from .nn import mean_squared_error, softmax_cross_entropy


@dataclass(frozen=True)
class LossBreakdown:
    l_ce: float
    l_rec: float
    l_reg: float
    l_total: float

    def to_dict(self) -> dict:
        return {"l_ce": self.l_ce, "l_rec": self.l_rec,
                "l_reg": self.l_reg, "l_total": self.l_total}


def loss_ce(trace: ForwardTrace):
    """Softmax cross-entropy over logits[i, j] = theta_o_i . theta_w_j.

    The logits are raw dot products: no normalization, no temperature.
    Returns (loss, d_theta_o, d_theta_w).
    """
    logits = trace.theta_o @ trace.theta_w.T
    loss, d_logits = softmax_cross_entropy(logits, trace.gt_rows)
    d_theta_o = d_logits @ trace.theta_w
    d_theta_w = d_logits.T @ trace.theta_o
    return loss, d_theta_o, d_theta_w


def loss_rec(trace: ForwardTrace, stop_target_grad: bool = False):
    """Mean squared error of both decoder outputs against each sample's
    encoded label embedding w[gt].

    Per sample i the second term reads row gt(i) of rho_w, so classes with
    more samples in the batch weigh more. Unless `stop_target_grad`, the
    target w also receives gradients from both terms.
    Returns (loss, d_rho_o, d_rho_w, d_w).
    """
    gt = trace.gt_rows
    w_gt = trace.w[gt]
    l1, d_rho_o, d_w1 = mean_squared_error(trace.rho_o, w_gt)
    rho_w_gt = trace.rho_w[gt]
    l2, d_rho_w_gt, d_w2 = mean_squared_error(rho_w_gt, w_gt)

    d_rho_w = np.zeros_like(trace.rho_w)
    np.add.at(d_rho_w, gt, d_rho_w_gt)
    d_w = np.zeros_like(trace.w)
    if not stop_target_grad:
        np.add.at(d_w, gt, d_w1 + d_w2)
    return l1 + l2, d_rho_o, d_rho_w, d_w


def loss_reg(trace: ForwardTrace):
    """Mean squared error between theta_o and the ground-truth theta_w row.

    Returns (loss, d_theta_o, d_theta_w).
    """
    gt = trace.gt_rows
    loss, d_theta_o, d_theta_w_gt = mean_squared_error(
        trace.theta_o, trace.theta_w[gt])
    d_theta_w = np.zeros_like(trace.theta_w)
    np.add.at(d_theta_w, gt, d_theta_w_gt)
    return loss, d_theta_o, d_theta_w


def loss_total(trace: ForwardTrace, loss_terms: Iterable[str],
               stop_rec_target_grad: bool = False):
    """Unweighted sum of the enabled components.

    Disabled components report 0 and contribute no gradient. Returns
    (LossBreakdown, TraceGrads).
    """
    terms = set(loss_terms)
    if not terms:
        raise ConfigError("loss_terms must be nonempty")
    tg = TraceGrads.zeros_like(trace)
    l_ce = l_rec = l_reg = 0.0
    if "ce" in terms:
        l_ce, d_to, d_tw = loss_ce(trace)
        tg.theta_o += d_to
        tg.theta_w += d_tw
    if "rec" in terms:
        l_rec, d_ro, d_rw, d_w = loss_rec(trace, stop_rec_target_grad)
        tg.rho_o += d_ro
        tg.rho_w += d_rw
        tg.w += d_w
    if "reg" in terms:
        l_reg, d_to, d_tw = loss_reg(trace)
        tg.theta_o += d_to
        tg.theta_w += d_tw
    breakdown = LossBreakdown(l_ce=l_ce, l_rec=l_rec, l_reg=l_reg,
                              l_total=l_ce + l_rec + l_reg)
    return breakdown, tg
