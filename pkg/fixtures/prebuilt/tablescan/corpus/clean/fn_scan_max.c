__int64 __fastcall fn_scan_max(struct table *a1)
{
  int v2[16]; // [rsp+0h]
  int v3; // eax
  int i; // [rsp+44h]

  for ( i = 0; i < a1->count; ++i )
    v2[i] = a1->slots[i].val;
  v3 = -2147483647;
  for ( i = 0; i < a1->count; ++i )
  {
    if ( v2[i] > v3 )
      v3 = v2[i];
  }
  return (unsigned int)v3;
}
