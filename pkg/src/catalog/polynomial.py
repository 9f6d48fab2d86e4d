"""
exact multivariate polynomials in the momentum coordinates
used for hamiltonian profiles and synthetic action profiles
"""

from dataclasses import dataclass
from math import prod

from common.errors import ModelSpecError


@dataclass(frozen=True)
class Polynomial:
    """sum of coeff * prod(x_i ** e_i) over a fixed number of variables"""

    nvars: int
    terms: tuple  # sorted ((exponents, coeff), ...)

    @classmethod
    def from_terms(cls, nvars, terms, field='terms'):
        """
        build from a list of {"exponents": [...], "coeff": c} records

        args:
            nvars: number of variables
            terms: list of term records
            field: config field name used in error messages

        returns:
            Polynomial with repeated exponents merged and zero terms dropped
        """
        if not isinstance(terms, list):
            raise ModelSpecError(f"'{field}' must be a list of terms", field=field)

        merged = {}
        for idx, term in enumerate(terms):
            if not isinstance(term, dict) or 'exponents' not in term or 'coeff' not in term:
                raise ModelSpecError(f"term {idx} needs 'exponents' and 'coeff'", field=f'{field}[{idx}]')

            exponents = term['exponents']
            coeff = term['coeff']
            if not isinstance(exponents, list) or len(exponents) != nvars:
                raise ModelSpecError(
                    f"term {idx} has {len(exponents) if isinstance(exponents, list) else '?'} exponents, expected {nvars}",
                    field=f'{field}[{idx}].exponents',
                )
            if not all(isinstance(e, int) and not isinstance(e, bool) and e >= 0 for e in exponents):
                raise ModelSpecError(f"term {idx} exponents must be non-negative integers", field=f'{field}[{idx}].exponents')
            if isinstance(coeff, bool) or not isinstance(coeff, (int, float)):
                raise ModelSpecError(f"term {idx} coeff must be a number", field=f'{field}[{idx}].coeff')

            key = tuple(exponents)
            merged[key] = merged.get(key, 0.0) + float(coeff)

        return cls(nvars, tuple(sorted((k, v) for k, v in merged.items() if v != 0.0)))

    @classmethod
    def constant(cls, nvars, value):
        return cls(nvars, (((0,) * nvars, float(value)),) if value != 0.0 else ())

    def to_terms(self):
        """inverse of from_terms"""
        return [{'exponents': list(e), 'coeff': c} for e, c in self.terms]

    @property
    def degree(self):
        return max((sum(e) for e, _ in self.terms), default=0)

    def __call__(self, x):
        return sum(c * prod(xi ** ei for xi, ei in zip(x, e)) for e, c in self.terms)

    def derivative(self, var):
        """exact partial derivative with respect to variable index var"""
        out = []
        for e, c in self.terms:
            if e[var] == 0:
                continue
            lowered = e[:var] + (e[var] - 1,) + e[var + 1:]
            out.append((lowered, c * e[var]))
        return Polynomial(self.nvars, tuple(sorted(out)))

    def gradient(self, x):
        return [self.derivative(j)(x) for j in range(self.nvars)]

    def hessian(self, x):
        rows = []
        for j in range(self.nvars):
            dj = self.derivative(j)
            rows.append([dj.derivative(l)(x) for l in range(self.nvars)])
        return rows

    def permuted(self, order):
        """re-index variables so that new variable j is old variable order[j]"""
        return Polynomial(
            self.nvars,
            tuple(sorted((tuple(e[o] for o in order), c) for e, c in self.terms)),
        )
