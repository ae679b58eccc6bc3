"""Regenerate the OOXML fixtures under fixtures/.

Requires openpyxl. Output is normalised (fixed timestamps, sorted zip
entries) so reruns produce identical bytes.
"""

import io
import sys
import zipfile
from datetime import datetime
from pathlib import Path

import openpyxl
from openpyxl.workbook.defined_name import DefinedName

OUT = Path(__file__).resolve().parent.parent / "fixtures"
STAMP = datetime(2020, 1, 1)


def save(wb, name, extra_parts=None, content_types=None):
    wb.properties.created = STAMP
    wb.properties.modified = STAMP
    buf = io.BytesIO()
    wb.save(buf)
    src = zipfile.ZipFile(io.BytesIO(buf.getvalue()))
    parts = {n: src.read(n) for n in src.namelist()}
    for part, data in (extra_parts or {}).items():
        parts[part] = data
    if content_types:
        ct = parts["[Content_Types].xml"].decode()
        ct = ct.replace("</Types>", content_types + "</Types>")
        parts["[Content_Types].xml"] = ct.encode()
    with zipfile.ZipFile(OUT / name, "w", zipfile.ZIP_DEFLATED) as z:
        for part in sorted(parts):
            info = zipfile.ZipInfo(part, date_time=(2020, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            z.writestr(info, parts[part])


def minimal():
    wb = openpyxl.Workbook()
    wb.active.title = "Sheet1"
    wb.active["A1"] = 5
    save(wb, "minimal.xlsx")


def manual_calc():
    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = "Sheet1"
    ws["A1"] = 2
    ws["A2"] = "=A1*2"
    wb.calculation.calcMode = "manual"
    wb.calculation.calcOnSave = False
    save(wb, "manual_calc.xlsx")


def with_macros():
    wb = openpyxl.Workbook()
    ws = wb.active
    ws.title = "Sheet1"
    ws["A1"] = 1
    ws["B1"] = "=MYTAX(A1)"
    save(
        wb,
        "macro.xlsm",
        extra_parts={"xl/vbaProject.bin": b"\xd0\xcf\x11\xe0placeholder"},
        content_types='<Default Extension="bin" ContentType="application/vnd.ms-office.vbaProject"/>',
    )


def dual():
    wb = openpyxl.Workbook()
    data = wb.active
    data.title = "Data"
    data["A1"] = "Rate"
    data["B1"] = 0.175
    for i, r in enumerate(range(2, 7)):
        data[f"A{r}"] = f"Item {i + 1}"
        data[f"B{r}"] = (i + 1) * 100
        data[f"C{r}"] = f"=B{r}*$B$1"
    data["C4"] = 42
    data["C7"] = "=SUM(C2:C6)"
    data["D3"] = "1234"
    data["E5"] = "#DIV/0!"
    data["E5"].data_type = "e"
    data["B8"] = True
    data["A10"] = 7
    data.row_dimensions[10].hidden = True
    calc = wb.create_sheet("Calc")
    calc["A1"] = "=Data!C7*17.5%"
    calc["A2"] = "=VLOOKUP(A1,Rates,2,FALSE)"
    calc["A3"] = "=5+5+7"
    calc["A4"] = "=NPV(0.08,Data!B2:B6)"
    calc["A5"] = "=SUM(Data!A2:B6)"
    calc["A6"] = "=A2+A3+A4+A5+Data!A10+Data!E5"
    calc.protection.sheet = True
    wb.defined_names["Rates"] = DefinedName("Rates", attr_text="Data!$A$2:$B$6")
    wb.defined_names["OUTPUT_Total"] = DefinedName("OUTPUT_Total", attr_text="Calc!$A$6")
    save(wb, "dual.xlsx")


if __name__ == "__main__":
    OUT.mkdir(exist_ok=True)
    minimal()
    manual_calc()
    with_macros()
    dual()
    sys.exit(0)
