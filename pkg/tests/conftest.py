import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from provopt.algebra import (
    Attr, Cmp, Const, Join, Project, Relation, Select,
)
from provopt.executor import BagRelation


@pytest.fixture
def shop_db():
    """The worked example database: shops, sales, items."""
    return {
        "shop": BagRelation.from_rows(
            ("name", "numEmpl"), [("Walmart", 3), ("Cosco", 14)]),
        "sale": BagRelation.from_rows(
            ("shop", "item"),
            [("Walmart", "Steak"), ("Walmart", "Butter"), ("Walmart", "Bread"),
             ("Cosco", "Butter"), ("Cosco", "Bread")]),
        "item": BagRelation.from_rows(
            ("id", "price"), [("Steak", 100), ("Butter", 10), ("Bread", 25)]),
    }


@pytest.fixture
def shop_query():
    """Shops selling items that cost more than 20, as an algebra graph."""
    shop = Relation("shop", ("name", "numEmpl"))
    sale = Relation("sale", ("shop", "item"))
    item = Relation("item", ("id", "price"))
    pricey = Select(Cmp(">", Attr("price"), Const(20)), item)
    joined = Join((("item", "id"),),
                  Join((("name", "shop"),), shop, sale), pricey)
    return Project(((Attr("name"), "name"),), joined)


#: the provenance encoding of the shop query over shop_db
SHOP_PROVENANCE_ROWS = {
    ("Walmart", "Walmart", 3, "Walmart", "Steak", "Steak", 100): 1,
    ("Walmart", "Walmart", 3, "Walmart", "Bread", "Bread", 25): 1,
    ("Cosco", "Cosco", 14, "Cosco", "Bread", "Bread", 25): 1,
}


@pytest.fixture
def shop_provenance_rows():
    return dict(SHOP_PROVENANCE_ROWS)
