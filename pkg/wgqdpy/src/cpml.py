"""Convolutional perfectly matched layer for the Yee solver

Every spatial difference inside a PML slab is replaced by

    d/kappa + psi,    psi <- b * psi + c * d

with graded profiles

    sigma(p) = sigma_max * p**m
    kappa(p) = 1 + (kappa_max - 1) * p**m
    alpha(p) = alpha_max * (1 - p)

where p in [0, 1] is the normalized depth into the layer and

    b = exp(-(sigma / kappa + alpha) * dt / eps0)
    c = sigma / (sigma * kappa + kappa**2 * alpha) * (b - 1)

The auxiliary psi arrays only cover the two slabs of each absorbing axis.
"""

from typing import Dict, Iterable, Tuple

import numpy as np
from scipy import constants

from wgqdpy import wglogging

logger = wglogging.get_wg_logger()

DEFAULT_THICKNESS = 10
DEFAULT_ORDER = 3
DEFAULT_KAPPA_MAX = 3.0

ETA0 = np.sqrt(constants.mu_0 / constants.epsilon_0)


class CPML:
    """Absorbing layers on the non-periodic faces of the Yee grid

    :param shape: Grid shape (Nx, Ny, Nz).
    :param cell_size: Cell edge in m.
    :param dt: Time step in s.
    :param frequency: Center frequency in Hz, used to set the CFS alpha.
    :param thickness: Layer thickness in cells. Default is 10.
    :param order: Polynomial grading order. Default is 3.
    :param kappa_max: Maximum coordinate stretching. Default is 3.
    :param periodic_axes: Axes without absorbing layers.
    """

    def __init__(
        self,
        shape: Tuple[int, int, int],
        cell_size: float,
        dt: float,
        frequency: float,
        thickness: int = DEFAULT_THICKNESS,
        order: int = DEFAULT_ORDER,
        kappa_max: float = DEFAULT_KAPPA_MAX,
        periodic_axes: Iterable[int] = (),
    ):
        self.shape = tuple(shape)
        self.thickness = int(thickness)
        self.order = order
        self.kappa_max = kappa_max
        self.dt = dt
        self.cell_size = cell_size

        # optimal conductivity for polynomial grading (Taflove & Hagness)
        self.sigma_max = 0.8 * (order + 1) / (ETA0 * cell_size)
        self.alpha_max = 2 * np.pi * frequency * constants.epsilon_0 / 10

        self.axes = []
        for axis in range(3):
            if axis in tuple(periodic_axes):
                continue
            if self.shape[axis] <= 2 * self.thickness:
                raise ValueError(
                    f"Axis {axis} has {self.shape[axis]} cells, which leaves "
                    f"no interior inside {self.thickness}-cell CPML layers."
                )
            self.axes.append(axis)

        # profiles per (axis, location); 'int' at nodes, 'half' between
        self._profiles: Dict[Tuple[int, str], Tuple[tuple, tuple]] = {}
        for axis in self.axes:
            for location in ("int", "half"):
                self._profiles[(axis, location)] = self._slab_coefficients(
                    axis, location
                )
        self._psi: Dict[tuple, np.ndarray] = {}

    def _depth(self, axis: int, location: str) -> np.ndarray:
        """Normalized depth into the layer for the 2*thickness slab entries"""
        n, npml = self.shape[axis], self.thickness
        shift = 0.5 if location == "half" else 0.0
        lo = np.arange(npml) + shift
        hi = np.arange(n - npml, n) + shift
        depth_lo = (npml - lo) / npml
        depth_hi = (hi - (n - 1 - npml)) / npml
        return np.clip(np.concatenate([depth_lo, depth_hi]), 0.0, 1.0)

    def _coefficients(self, axis: int, location: str) -> Tuple[np.ndarray, ...]:
        depth = self._depth(axis, location)
        graded = depth**self.order
        sigma = self.sigma_max * graded
        kappa = 1.0 + (self.kappa_max - 1.0) * graded
        alpha = self.alpha_max * (1.0 - depth)
        b = np.exp(-(sigma / kappa + alpha) * self.dt / constants.epsilon_0)
        denom = sigma * kappa + kappa**2 * alpha
        c = np.where(denom > 0, sigma / np.where(denom > 0, denom, 1.0), 0.0) * (
            b - 1.0
        )
        return b, c, 1.0 / kappa

    def _slab_coefficients(self, axis: int, location: str) -> Tuple[tuple, tuple]:
        """(b, c, 1/kappa) of the low and the high slab, shaped to broadcast"""
        npml = self.thickness
        shape = [1, 1, 1]
        shape[axis] = npml
        coefficients = self._coefficients(axis, location)
        low = tuple(v[:npml].reshape(shape) for v in coefficients)
        high = tuple(v[npml:].reshape(shape) for v in coefficients)
        return low, high

    def stretch(
        self, key: tuple, diff: np.ndarray, axis: int, location: str
    ) -> np.ndarray:
        """Apply the CPML recursion to a difference array in place

        :param key: Identifies the auxiliary psi arrays, e.g. ('H', 0, 1).
        :param diff: Spatial difference along axis (full grid shape).
        :param axis: Axis of the difference.
        :param location: 'half' for forward differences of E (H update),
            'int' for backward differences of H (E update).
        :returns: The modified diff array.
        """
        if axis not in self.axes:
            return diff
        npml = self.thickness
        n = diff.shape[axis]
        slabs = zip(("lo", "hi"), (slice(0, npml), slice(n - npml, n)))
        for (side, part), (b, c, inv_kappa) in zip(
            slabs, self._profiles[(axis, location)]
        ):
            index = [slice(None)] * 3
            index[axis] = part
            view = diff[tuple(index)]
            psi = self._psi.get(key + (side,))
            if psi is None:
                psi = np.zeros_like(view)
                self._psi[key + (side,)] = psi
            psi *= b
            psi += c * view
            view *= inv_kappa
            view += psi
        return diff

    def interior(self, axis: int) -> Tuple[int, int]:
        """Index range [start, stop) of cells outside the layers along axis"""
        if axis not in self.axes:
            return 0, self.shape[axis]
        return self.thickness, self.shape[axis] - self.thickness
